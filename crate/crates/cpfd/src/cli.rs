//! Experiment orchestration behind the command-line binary: config-file
//! parsing, the hash-keyed output layout, the individual commands, the
//! ablation sweeps, and the aggregated multi-seed run report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::confmap::{
    calibrate, default_config_from_stats, map_alpha, MappingKind, TeacherStats,
};
use crate::data::{
    generate, mask_post_hoc, read_dataset, read_distill, split, write_atomic, write_dataset,
    write_distill,
    Dataset, DistillSet, GenConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{best_f1, confidence_table, report, ConfidenceTable, MetricsReport};
use crate::ndcore::{softmax_t_rows, Matrix};
use crate::nn::{default_priv_spec, default_raw_spec, AnyModel, StudentModel, TeacherModel};
use crate::train::{
    load_checkpoint, save_checkpoint, train_student, train_teacher, Mode, TrainConfig,
};

/// Everything a run needs, parsed from a line-oriented `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub gen: GenConfig,
    pub eval_fraction: f64,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub temperature: f64,
    pub alpha: f64,
    pub eval_every: usize,
    pub mapping_kind: MappingKind,
    /// Optional overrides for the calibrated mapping's alpha range.
    pub mapping_alpha_min: Option<f64>,
    pub mapping_alpha_max: Option<f64>,
    /// Hidden widths of the student encoder (shared by all student modes).
    pub student_hidden: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            gen: GenConfig::default(),
            eval_fraction: 0.2,
            seeds: vec![1, 2, 3, 4, 5],
            epochs: 20,
            batch_size: 128,
            learning_rate: 3e-3,
            lr_decay_factor: 0.9,
            temperature: 2.0,
            alpha: 0.5,
            eval_every: 2,
            mapping_kind: MappingKind::ExpDecay,
            mapping_alpha_min: Some(0.5),
            mapping_alpha_max: Some(0.98),
            student_hidden: vec![128, 64, 32],
        }
    }
}

impl ExperimentConfig {
    /// Parse a config file. Unknown keys are rejected; missing keys keep
    /// their defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw_line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw_line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: lineno,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| Error::Parse {
                line: lineno,
                msg: format!("bad {what} value '{value}' for {key}"),
            };
            macro_rules! num {
                ($t:ty, $what:expr) => {
                    value.parse::<$t>().map_err(|_| bad($what))?
                };
            }
            match key {
                "gen.n_samples" => cfg.gen.n_samples = num!(usize, "integer"),
                "gen.d_latent" => cfg.gen.d_latent = num!(usize, "integer"),
                "gen.d_raw" => cfg.gen.d_raw = num!(usize, "integer"),
                "gen.d_priv" => cfg.gen.d_priv = num!(usize, "integer"),
                "gen.d_posthoc" => cfg.gen.d_posthoc = num!(usize, "integer"),
                "gen.positive_rate" => cfg.gen.positive_rate = num!(f64, "float"),
                "gen.raw_noise_scale" => cfg.gen.raw_noise_scale = num!(f64, "float"),
                "gen.priv_noise_scale" => cfg.gen.priv_noise_scale = num!(f64, "float"),
                "gen.post_hoc_strength" => cfg.gen.post_hoc_strength = num!(f64, "float"),
                "gen.priv_copies_raw" => cfg.gen.priv_copies_raw = num!(bool, "bool"),
                "eval_fraction" => cfg.eval_fraction = num!(f64, "float"),
                "seeds" => {
                    cfg.seeds = value
                        .split(',')
                        .map(|v| v.trim().parse::<u64>().map_err(|_| bad("seed list")))
                        .collect::<Result<Vec<_>>>()?;
                }
                "train.epochs" => cfg.epochs = num!(usize, "integer"),
                "train.batch_size" => cfg.batch_size = num!(usize, "integer"),
                "train.learning_rate" => cfg.learning_rate = num!(f64, "float"),
                "train.lr_decay_factor" => cfg.lr_decay_factor = num!(f64, "float"),
                "train.temperature" => cfg.temperature = num!(f64, "float"),
                "train.alpha" => cfg.alpha = num!(f64, "float"),
                "train.eval_every" => cfg.eval_every = num!(usize, "integer"),
                "arch.student_hidden" => {
                    cfg.student_hidden = value
                        .split(',')
                        .map(|v| v.trim().parse::<usize>().map_err(|_| bad("width list")))
                        .collect::<Result<Vec<_>>>()?;
                }
                "mapping.alpha_min" => cfg.mapping_alpha_min = Some(num!(f64, "float")),
                "mapping.alpha_max" => cfg.mapping_alpha_max = Some(num!(f64, "float")),
                "mapping.kind" => {
                    cfg.mapping_kind = MappingKind::parse(value).map_err(|e| Error::Parse {
                        line: lineno,
                        msg: e.to_string(),
                    })?
                }
                _ => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("unknown config key '{key}'"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list must be nonempty".into()));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(Error::Config(format!(
                "eval_fraction must lie strictly in (0,1), got {}",
                self.eval_fraction
            )));
        }
        if self.student_hidden.is_empty() {
            return Err(Error::Config("arch.student_hidden must be nonempty".into()));
        }
        self.train_config(Mode::Teacher, 0).validate()
    }

    /// Full student MLP spec for the given raw-feature width.
    pub fn student_spec(&self, d_raw: usize) -> Result<crate::nn::MlpSpec> {
        let mut widths = vec![d_raw];
        widths.extend_from_slice(&self.student_hidden);
        crate::nn::MlpSpec::new(widths)
    }

    /// Canonical rendering; the config hash keys the output layout.
    fn canonical(&self) -> String {
        let g = &self.gen;
        format!(
            "gen:{},{},{},{},{},{:?},{:?},{:?},{:?},{}|eval:{:?}|seeds:{:?}|train:{},{},{:?},{:?},{:?},{:?},{}|map:{},{:?},{:?}|arch:{:?}",
            g.n_samples,
            g.d_latent,
            g.d_raw,
            g.d_priv,
            g.d_posthoc,
            g.positive_rate,
            g.raw_noise_scale,
            g.priv_noise_scale,
            g.post_hoc_strength,
            g.priv_copies_raw,
            self.eval_fraction,
            self.seeds,
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.lr_decay_factor,
            self.temperature,
            self.alpha,
            self.eval_every,
            self.mapping_kind.name(),
            self.mapping_alpha_min,
            self.mapping_alpha_max,
            self.student_hidden,
        )
    }

    pub fn hash(&self) -> u64 {
        fnv1a(self.canonical().as_bytes())
    }

    /// Calibrated mapping for this run, with any configured alpha-range
    /// overrides applied.
    pub fn calibrated_mapping(
        &self,
        kind: MappingKind,
        stats: &TeacherStats,
    ) -> crate::confmap::MappingConfig {
        let mut mapping = default_config_from_stats(kind, stats);
        if let Some(a) = self.mapping_alpha_min {
            mapping.alpha_min = a;
        }
        if let Some(a) = self.mapping_alpha_max {
            mapping.alpha_max = a;
        }
        mapping
    }

    /// Training config for one mode and seed; cpfd mappings are attached
    /// separately after calibration.
    pub fn train_config(&self, mode: Mode, seed: u64) -> TrainConfig {
        TrainConfig {
            mode,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            lr_decay_factor: self.lr_decay_factor,
            temperature: self.temperature,
            alpha: self.alpha,
            mapping: None,
            seed,
            eval_every: self.eval_every,
        }
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

// ---- output layout ------------------------------------------------------------

/// All artifact paths for one (config, seed) pair. A pure function of the
/// config hash and seed, so reruns land on the same files.
#[derive(Debug, Clone)]
pub struct Layout {
    pub dir: PathBuf,
}

impl Layout {
    pub fn new(out: &Path, config: &ExperimentConfig, seed: u64) -> Self {
        Layout {
            dir: out
                .join(format!("cfg-{:016x}", config.hash()))
                .join(format!("seed-{seed}")),
        }
    }

    pub fn train_set(&self) -> PathBuf {
        self.dir.join("train.ds")
    }
    pub fn eval_set(&self) -> PathBuf {
        self.dir.join("eval.ds")
    }
    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.txt")
    }
    pub fn teacher_ckpt(&self) -> PathBuf {
        self.dir.join("teacher.ckpt")
    }
    pub fn teacher_log(&self) -> PathBuf {
        self.dir.join("teacher.trainlog")
    }
    pub fn distill(&self) -> PathBuf {
        self.dir.join("distill.records")
    }
    pub fn student_ckpt(&self, label: &str) -> PathBuf {
        self.dir.join(format!("student-{label}.ckpt"))
    }
    pub fn student_log(&self, label: &str) -> PathBuf {
        self.dir.join(format!("student-{label}.trainlog"))
    }
    pub fn eval_report(&self, model: &str) -> PathBuf {
        self.dir.join(format!("eval-{model}.txt"))
    }
    pub fn analyze_report(&self) -> PathBuf {
        self.dir.join("analyze.txt")
    }
}

/// Sweep reports aggregate over seeds, so they live beside the seed dirs.
pub fn sweep_report_path(out: &Path, config: &ExperimentConfig, axis: SweepAxis) -> PathBuf {
    out.join(format!("cfg-{:016x}", config.hash()))
        .join(format!("sweep-{}.txt", axis.name()))
}

pub fn run_report_path(out: &Path, config: &ExperimentConfig) -> PathBuf {
    out.join(format!("cfg-{:016x}", config.hash())).join("report.txt")
}

fn guard(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Exists(path.display().to_string()));
    }
    Ok(())
}

fn require(path: &Path, produced_by: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Dependency(format!(
            "{} not found; run `{produced_by}` first",
            path.display()
        )));
    }
    Ok(())
}

// ---- scoring helpers ------------------------------------------------------------

fn positive_scores(logits: &Matrix) -> Result<Vec<f64>> {
    let probs = softmax_t_rows(logits, 1.0)?;
    Ok((0..probs.rows()).map(|r| probs.get(r, 1)).collect())
}

fn teacher_scores(model: &TeacherModel, ds: &Dataset) -> Result<Vec<f64>> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut scores = Vec::with_capacity(ds.len());
    for chunk in idx.chunks(512) {
        let logits = model.forward_batch(&ds.raw_matrix(chunk), &ds.priv_matrix(chunk))?;
        scores.extend(positive_scores(&logits)?);
    }
    Ok(scores)
}

fn student_scores(model: &StudentModel, ds: &Dataset) -> Result<Vec<f64>> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut scores = Vec::with_capacity(ds.len());
    for chunk in idx.chunks(512) {
        scores.extend(positive_scores(&model.forward_batch(&ds.raw_matrix(chunk))?)?);
    }
    Ok(scores)
}

fn student_scores_records(model: &StudentModel, records: &DistillSet) -> Result<Vec<f64>> {
    let mut scores = Vec::with_capacity(records.records.len());
    for chunk in records.records.chunks(512) {
        let mut data = Vec::with_capacity(chunk.len() * records.d_raw);
        for r in chunk {
            data.extend_from_slice(&r.raw);
        }
        let raw = Matrix::new(chunk.len(), records.d_raw, data)?;
        scores.extend(positive_scores(&model.forward_batch(&raw)?)?);
    }
    Ok(scores)
}

// ---- commands ------------------------------------------------------------

/// Generate, split and write the dataset pair for one seed.
pub fn cmd_gen(config: &ExperimentConfig, seed: u64, out: &Path, force: bool) -> Result<Layout> {
    config.validate()?;
    let layout = Layout::new(out, config, seed);
    guard(&layout.train_set(), force)?;
    guard(&layout.eval_set(), force)?;
    guard(&layout.manifest(), force)?;

    let gen_cfg = GenConfig { seed, ..config.gen.clone() };
    let full = generate(&gen_cfg)?;
    let (train, mut eval) = split(&full, config.eval_fraction, seed)?;
    // post-hoc features don't exist yet when the eval rows would be scored
    mask_post_hoc(&mut eval, gen_cfg.d_posthoc);

    std::fs::create_dir_all(&layout.dir)?;
    write_dataset(&train, &layout.train_set())?;
    write_dataset(&eval, &layout.eval_set())?;
    let manifest = format!(
        "config_hash {:016x}\nseed {}\nn_train {}\nn_eval {}\ntrain_positive_rate {:?}\neval_positive_rate {:?}\n",
        config.hash(),
        seed,
        train.len(),
        eval.len(),
        train.positive_rate(),
        eval.positive_rate(),
    );
    write_atomic(&layout.manifest(), manifest.as_bytes())?;
    Ok(layout)
}

/// Train the all-features teacher for one seed and checkpoint the best
/// eval-AUC snapshot.
pub fn cmd_train_teacher(
    config: &ExperimentConfig,
    seed: u64,
    out: &Path,
    force: bool,
) -> Result<TeacherModel> {
    config.validate()?;
    let layout = Layout::new(out, config, seed);
    guard(&layout.teacher_ckpt(), force)?;
    guard(&layout.teacher_log(), force)?;
    require(&layout.train_set(), "gen")?;
    require(&layout.eval_set(), "gen")?;

    let train = read_dataset(&layout.train_set())?;
    let eval = read_dataset(&layout.eval_set())?;
    let tcfg = config.train_config(Mode::Teacher, seed);
    let (model, log) = train_teacher(
        &tcfg,
        default_raw_spec(train.d_raw),
        default_priv_spec(train.d_priv),
        &train,
        &eval,
    )?;
    save_checkpoint(&AnyModel::Teacher(model.clone()), &layout.teacher_ckpt())?;
    write_atomic(&layout.teacher_log(), log.to_text().as_bytes())?;
    Ok(model)
}

/// Freeze the teacher's logits and losses over the training split.
pub fn cmd_export_distill(
    config: &ExperimentConfig,
    seed: u64,
    out: &Path,
    force: bool,
) -> Result<DistillSet> {
    config.validate()?;
    let layout = Layout::new(out, config, seed);
    guard(&layout.distill(), force)?;
    require(&layout.teacher_ckpt(), "train-teacher")?;
    require(&layout.train_set(), "gen")?;

    let teacher = load_checkpoint(&layout.teacher_ckpt())?.into_teacher()?;
    let train = read_dataset(&layout.train_set())?;
    let records = crate::data::export_distill(&teacher, &train)?;
    write_distill(&records, &layout.distill())?;
    Ok(records)
}

fn fit_student(
    config: &ExperimentConfig,
    tcfg: &TrainConfig,
    layout: &Layout,
    label: &str,
) -> Result<StudentModel> {
    require(&layout.distill(), "export-distill")?;
    require(&layout.eval_set(), "gen")?;
    let records = read_distill(&layout.distill())?;
    let eval = read_dataset(&layout.eval_set())?;

    let mut tcfg = tcfg.clone();
    let stats;
    let stats_ref = if tcfg.mode == Mode::Cpfd && tcfg.mapping.is_none() {
        stats = calibrate(&records.teacher_losses())?;
        tcfg.mapping = Some(config.calibrated_mapping(config.mapping_kind, &stats));
        Some(&stats)
    } else {
        None
    };
    let (model, log) =
        train_student(&tcfg, config.student_spec(records.d_raw)?, &records, &eval, stats_ref)?;
    save_checkpoint(&AnyModel::Student(model.clone()), &layout.student_ckpt(label))?;
    write_atomic(&layout.student_log(label), log.to_text().as_bytes())?;
    Ok(model)
}

/// Train a student in the given mode against the frozen distillation records.
pub fn cmd_train_student(
    config: &ExperimentConfig,
    mode: Mode,
    seed: u64,
    out: &Path,
    force: bool,
) -> Result<StudentModel> {
    config.validate()?;
    if mode == Mode::Teacher {
        return Err(Error::Config("train-student modes are plain, pfd, cpfd".into()));
    }
    let layout = Layout::new(out, config, seed);
    let label = mode.name();
    guard(&layout.student_ckpt(label), force)?;
    guard(&layout.student_log(label), force)?;
    fit_student(config, &config.train_config(mode, seed), &layout, label)
}

/// Score a trained model on the eval split and write the metrics report.
/// `model` is one of teacher, plain, pfd, cpfd.
pub fn cmd_eval(
    config: &ExperimentConfig,
    model: &str,
    seed: u64,
    out: &Path,
    force: bool,
) -> Result<MetricsReport> {
    config.validate()?;
    let layout = Layout::new(out, config, seed);
    let ckpt = match model {
        "teacher" => layout.teacher_ckpt(),
        "plain" | "pfd" | "cpfd" => layout.student_ckpt(model),
        _ => return Err(Error::Config(format!("unknown model '{model}'"))),
    };
    guard(&layout.eval_report(model), force)?;
    let produced_by = if model == "teacher" { "train-teacher" } else { "train-student" };
    require(&ckpt, produced_by)?;
    require(&layout.eval_set(), "gen")?;

    let eval = read_dataset(&layout.eval_set())?;
    if eval.is_empty() {
        return Err(Error::Param("eval set is empty".into()));
    }
    let scores = match load_checkpoint(&ckpt)? {
        AnyModel::Teacher(t) => teacher_scores(&t, &eval)?,
        AnyModel::Student(s) => student_scores(&s, &eval)?,
    };
    let rpt = report(&scores, &eval.labels())?;
    let mut text = metrics_machine_line(model, seed, &rpt);
    text.push_str(&metrics_table(&[(model.to_string(), rpt.clone())]));
    write_atomic(&layout.eval_report(model), text.as_bytes())?;
    Ok(rpt)
}

fn metrics_machine_line(model: &str, seed: u64, r: &MetricsReport) -> String {
    format!(
        "metrics model={} seed={} roc_auc={:?} pr_auc={:?} f1_at_half={:?} best_f1={:?} \
         best_f1_threshold={:?} hit_rate={:?} hit_recall_count={} n_pos={} n_neg={}\n",
        model,
        seed,
        r.roc_auc,
        r.pr_auc,
        r.f1_at_half,
        r.best_f1,
        r.best_f1_threshold,
        r.hit_rate,
        r.hit_recall_count,
        r.n_pos,
        r.n_neg,
    )
}

fn metrics_table(rows: &[(String, MetricsReport)]) -> String {
    let mut out = format!(
        "{:<10} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "model", "roc_auc", "pr_auc", "f1@0.5", "best_f1", "hit_rate"
    );
    for (name, r) in rows {
        writeln!(
            out,
            "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            name, r.roc_auc, r.pr_auc, r.f1_at_half, r.best_f1, r.hit_rate
        )
        .unwrap();
    }
    out
}

// ---- analysis ------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub confidence: ConfidenceTable,
    pub stats: TeacherStats,
    /// Per mapping kind: sampled (teacher loss, alpha) pairs over the
    /// calibrated loss range.
    pub curves: Vec<(MappingKind, Vec<(f64, f64)>)>,
}

/// Confidence table of the cpfd student against the teacher's per-sample
/// losses, plus alpha-vs-loss curves for every adaptive mapping kind.
pub fn cmd_analyze(
    config: &ExperimentConfig,
    seed: u64,
    out: &Path,
    force: bool,
) -> Result<AnalysisReport> {
    config.validate()?;
    let layout = Layout::new(out, config, seed);
    guard(&layout.analyze_report(), force)?;
    require(&layout.distill(), "export-distill")?;
    require(&layout.student_ckpt("cpfd"), "train-student")?;

    let records = read_distill(&layout.distill())?;
    let student = load_checkpoint(&layout.student_ckpt("cpfd"))?.into_student()?;
    let scores = student_scores_records(&student, &records)?;
    let labels: Vec<usize> = records.records.iter().map(|r| r.label).collect();
    let losses = records.teacher_losses();
    let (_, threshold) = best_f1(&scores, &labels)?;
    let confidence = confidence_table(&losses, &scores, &labels, threshold)?;

    let stats = calibrate(&losses)?;
    let mut curves = Vec::new();
    for kind in MappingKind::ALL_ADAPTIVE {
        let mapping = config.calibrated_mapping(kind, &stats);
        let grid = 33;
        let mut points = Vec::with_capacity(grid);
        for i in 0..grid {
            let l = mapping.l_min
                + (mapping.l_max - mapping.l_min) * i as f64 / (grid - 1) as f64;
            points.push((l, map_alpha(&mapping, l)?));
        }
        curves.push((kind, points));
    }

    let report = AnalysisReport { confidence, stats, curves };
    write_atomic(&layout.analyze_report(), render_analysis(&report, seed).as_bytes())?;
    Ok(report)
}

fn render_analysis(a: &AnalysisReport, seed: u64) -> String {
    let mut out = format!(
        "analysis seed={} threshold={:?} loss_p01={:?} loss_p50={:?} loss_p99={:?} loss_mean={:?}\n",
        seed, a.confidence.threshold, a.stats.p01, a.stats.p50, a.stats.p99, a.stats.mean
    );
    let row_names = ["correct", "incorrect"];
    let col_names = ["neg", "pos"];
    for (r, rn) in row_names.iter().enumerate() {
        for (c, cn) in col_names.iter().enumerate() {
            let mean = a.confidence.mean_loss[r][c]
                .map_or("n/a".to_string(), |v| format!("{v:?}"));
            writeln!(
                out,
                "confidence student={rn} class={cn} count={} mean_teacher_loss={mean}",
                a.confidence.counts[r][c]
            )
            .unwrap();
        }
        let overall =
            a.confidence.overall[r].map_or("n/a".to_string(), |v| format!("{v:?}"));
        writeln!(out, "confidence student={rn} class=all mean_teacher_loss={overall}").unwrap();
    }
    for (kind, points) in &a.curves {
        for (l, alpha) in points {
            writeln!(out, "curve mapping={} l_teacher={:?} alpha={:?}", kind.name(), l, alpha)
                .unwrap();
        }
    }
    out
}

// ---- sweeps ------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Mapping,
    Temperature,
    Alpha,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Mapping => "mapping",
            SweepAxis::Temperature => "temperature",
            SweepAxis::Alpha => "alpha",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mapping" => Ok(SweepAxis::Mapping),
            "temperature" => Ok(SweepAxis::Temperature),
            "alpha" => Ok(SweepAxis::Alpha),
            _ => Err(Error::Config(format!("unknown sweep axis '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub seed: u64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: String,
    pub cells: Vec<SweepCell>,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One student run per (axis value, seed) against cached teacher exports.
/// Missing per-seed artifacts are dependency errors, never recomputed here.
pub fn cmd_sweep(
    config: &ExperimentConfig,
    axis: SweepAxis,
    seeds: &[u64],
    out: &Path,
    force: bool,
) -> Result<SweepReport> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let report_path = sweep_report_path(out, config, axis);
    guard(&report_path, force)?;

    let labels: Vec<String> = match axis {
        SweepAxis::Mapping => {
            MappingKind::ALL_ADAPTIVE.iter().map(|k| k.name().to_string()).collect()
        }
        SweepAxis::Temperature => vec!["0.5".into(), "1".into(), "2".into()],
        SweepAxis::Alpha => (1..=9).map(|i| format!("0.{i}")).collect(),
    };
    let mut rows: Vec<SweepRow> = labels
        .iter()
        .map(|label| SweepRow {
            label: label.clone(),
            cells: Vec::new(),
            auc_mean: 0.0,
            auc_std: 0.0,
            f1_mean: 0.0,
            f1_std: 0.0,
        })
        .collect();

    for &seed in seeds {
        let layout = Layout::new(out, config, seed);
        require(&layout.distill(), "export-distill")?;
        require(&layout.eval_set(), "gen")?;
        let records = read_distill(&layout.distill())?;
        let eval = read_dataset(&layout.eval_set())?;
        let stats = calibrate(&records.teacher_losses())?;
        let eval_labels = eval.labels();

        for (vi, label) in labels.iter().enumerate() {
            let mut tcfg = match axis {
                SweepAxis::Mapping => {
                    let kind = MappingKind::parse(label)?;
                    let mut t = config.train_config(Mode::Cpfd, seed);
                    t.mapping = Some(config.calibrated_mapping(kind, &stats));
                    t
                }
                SweepAxis::Temperature => {
                    let mut t = config.train_config(Mode::Cpfd, seed);
                    t.temperature = label.parse().unwrap();
                    t.mapping = Some(config.calibrated_mapping(config.mapping_kind, &stats));
                    t
                }
                SweepAxis::Alpha => {
                    let mut t = config.train_config(Mode::Pfd, seed);
                    t.alpha = label.parse().unwrap();
                    t
                }
            };
            tcfg.seed = seed;
            let (model, _) = train_student(
                &tcfg,
                config.student_spec(records.d_raw)?,
                &records,
                &eval,
                Some(&stats),
            )?;
            let scores = student_scores(&model, &eval)?;
            rows[vi].cells.push(SweepCell { seed, metrics: report(&scores, &eval_labels)? });
        }
    }

    for row in &mut rows {
        let aucs: Vec<f64> = row.cells.iter().map(|c| c.metrics.roc_auc).collect();
        let f1s: Vec<f64> = row.cells.iter().map(|c| c.metrics.best_f1).collect();
        (row.auc_mean, row.auc_std) = mean_std(&aucs);
        (row.f1_mean, row.f1_std) = mean_std(&f1s);
    }

    let sweep = SweepReport { axis, rows };
    std::fs::create_dir_all(report_path.parent().unwrap())?;
    write_atomic(&report_path, render_sweep(&sweep).as_bytes())?;
    Ok(sweep)
}

fn render_sweep(s: &SweepReport) -> String {
    let mut out = String::new();
    for row in &s.rows {
        for cell in &row.cells {
            writeln!(
                out,
                "sweep axis={} value={} seed={} roc_auc={:?} best_f1={:?}",
                s.axis.name(),
                row.label,
                cell.seed,
                cell.metrics.roc_auc,
                cell.metrics.best_f1
            )
            .unwrap();
        }
    }
    writeln!(
        out,
        "{:<12} {:>8} {:>8} {:>8} {:>8}",
        s.axis.name(),
        "auc",
        "auc_sd",
        "f1",
        "f1_sd"
    )
    .unwrap();
    for row in &s.rows {
        writeln!(
            out,
            "{:<12} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            row.label, row.auc_mean, row.auc_std, row.f1_mean, row.f1_std
        )
        .unwrap();
    }
    out
}

// ---- full benchmark ------------------------------------------------------------

pub const PFD_ALPHA_GRID: [f64; 3] = [0.3, 0.5, 0.7];

#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub teacher: MetricsReport,
    pub plain: MetricsReport,
    pub pfd: MetricsReport,
    pub cpfd: MetricsReport,
    pub confidence: ConfidenceTable,
    /// (F1_cpfd - F1_plain) / (F1_teacher - F1_plain); None when the
    /// teacher-plain gap is not positive.
    pub gap_closure: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelAggregate {
    pub model: String,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub seeds: Vec<SeedOutcome>,
    pub models: Vec<ModelAggregate>,
    /// The fixed-alpha value the pfd column uses, chosen by mean F1 over the
    /// grid.
    pub pfd_alpha: f64,
    pub gap_closure_mean: Option<f64>,
}

fn ensure_gen(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<Layout> {
    let layout = Layout::new(out, config, seed);
    if layout.train_set().exists() && layout.eval_set().exists() && layout.manifest().exists() {
        return Ok(layout);
    }
    cmd_gen(config, seed, out, true)
}

fn ensure_teacher(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<TeacherModel> {
    let layout = Layout::new(out, config, seed);
    if layout.teacher_ckpt().exists() {
        return load_checkpoint(&layout.teacher_ckpt())?.into_teacher();
    }
    cmd_train_teacher(config, seed, out, true)
}

fn ensure_distill(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<DistillSet> {
    let layout = Layout::new(out, config, seed);
    if layout.distill().exists() {
        return read_distill(&layout.distill());
    }
    cmd_export_distill(config, seed, out, true)
}

fn ensure_student(
    config: &ExperimentConfig,
    tcfg: &TrainConfig,
    layout: &Layout,
    label: &str,
) -> Result<StudentModel> {
    if layout.student_ckpt(label).exists() {
        return load_checkpoint(&layout.student_ckpt(label))?.into_student();
    }
    fit_student(config, tcfg, layout, label)
}

/// Run the full teacher / plain / pfd / cpfd comparison over every configured
/// seed, reusing any artifacts already on disk. The pfd column picks the best
/// alpha from `PFD_ALPHA_GRID` by mean F1.
pub fn run_benchmark(config: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    config.validate()?;
    let mut per_seed: Vec<(u64, MetricsReport, MetricsReport, Vec<MetricsReport>, MetricsReport, ConfidenceTable)> =
        Vec::new();

    for &seed in &config.seeds {
        let layout = ensure_gen(config, seed, out)?;
        let teacher = ensure_teacher(config, seed, out)?;
        let records = ensure_distill(config, seed, out)?;
        let eval = read_dataset(&layout.eval_set())?;
        let eval_labels = eval.labels();

        let t_report = report(&teacher_scores(&teacher, &eval)?, &eval_labels)?;

        let plain = ensure_student(config, &config.train_config(Mode::Plain, seed), &layout, "plain")?;
        let p_report = report(&student_scores(&plain, &eval)?, &eval_labels)?;

        let mut pfd_reports = Vec::new();
        for alpha in PFD_ALPHA_GRID {
            let mut tcfg = config.train_config(Mode::Pfd, seed);
            tcfg.alpha = alpha;
            let label = format!("pfd-a{alpha}");
            let model = ensure_student(config, &tcfg, &layout, &label)?;
            pfd_reports.push(report(&student_scores(&model, &eval)?, &eval_labels)?);
        }

        let cpfd = ensure_student(config, &config.train_config(Mode::Cpfd, seed), &layout, "cpfd")?;
        let c_report = report(&student_scores(&cpfd, &eval)?, &eval_labels)?;

        let rec_scores = student_scores_records(&cpfd, &records)?;
        let rec_labels: Vec<usize> = records.records.iter().map(|r| r.label).collect();
        let (_, thr) = best_f1(&rec_scores, &rec_labels)?;
        let confidence =
            confidence_table(&records.teacher_losses(), &rec_scores, &rec_labels, thr)?;

        per_seed.push((seed, t_report, p_report, pfd_reports, c_report, confidence));
    }

    // pick the pfd alpha with the best mean F1 across seeds
    let n_seeds = per_seed.len() as f64;
    let best_alpha_idx = (0..PFD_ALPHA_GRID.len())
        .max_by(|&a, &b| {
            let mean = |i: usize| {
                per_seed.iter().map(|r| r.3[i].best_f1).sum::<f64>() / n_seeds
            };
            mean(a).partial_cmp(&mean(b)).unwrap()
        })
        .unwrap();
    let pfd_alpha = PFD_ALPHA_GRID[best_alpha_idx];

    let seeds: Vec<SeedOutcome> = per_seed
        .into_iter()
        .map(|(seed, teacher, plain, pfd_reports, cpfd, confidence)| {
            let pfd = pfd_reports[best_alpha_idx].clone();
            let gap = teacher.best_f1 - plain.best_f1;
            let gap_closure = (gap > 0.0).then(|| (cpfd.best_f1 - plain.best_f1) / gap);
            SeedOutcome { seed, teacher, plain, pfd, cpfd, confidence, gap_closure }
        })
        .collect();

    let aggregate = |model: &str, pick: &dyn Fn(&SeedOutcome) -> &MetricsReport| {
        let f1s: Vec<f64> = seeds.iter().map(|s| pick(s).best_f1).collect();
        let aucs: Vec<f64> = seeds.iter().map(|s| pick(s).roc_auc).collect();
        let (f1_mean, f1_std) = mean_std(&f1s);
        let (auc_mean, auc_std) = mean_std(&aucs);
        ModelAggregate { model: model.to_string(), f1_mean, f1_std, auc_mean, auc_std }
    };
    let models = vec![
        aggregate("teacher", &|s| &s.teacher),
        aggregate("plain", &|s| &s.plain),
        aggregate("pfd", &|s| &s.pfd),
        aggregate("cpfd", &|s| &s.cpfd),
    ];
    let closures: Vec<f64> = seeds.iter().filter_map(|s| s.gap_closure).collect();
    let gap_closure_mean =
        (closures.len() == seeds.len()).then(|| mean_std(&closures).0);

    let run = RunReport { seeds, models, pfd_alpha, gap_closure_mean };
    let path = run_report_path(out, config);
    std::fs::create_dir_all(path.parent().unwrap())?;
    write_atomic(&path, render_run_report(&run).as_bytes())?;
    Ok(run)
}

pub fn render_run_report(run: &RunReport) -> String {
    let mut out = format!("pfd_alpha {:?}\n", run.pfd_alpha);
    for s in &run.seeds {
        for (name, r) in [
            ("teacher", &s.teacher),
            ("plain", &s.plain),
            ("pfd", &s.pfd),
            ("cpfd", &s.cpfd),
        ] {
            out.push_str(&metrics_machine_line(name, s.seed, r));
        }
        let gc = s.gap_closure.map_or("undefined".to_string(), |v| format!("{v:?}"));
        writeln!(out, "gap_closure seed={} value={}", s.seed, gc).unwrap();
        let fmt = |v: &[Option<f64>; 2]| {
            let f = |x: &Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            format!("{}/{}", f(&v[0]), f(&v[1]))
        };
        writeln!(
            out,
            "confidence seed={} overall={} correct_by_class={} incorrect_by_class={}",
            s.seed,
            fmt(&s.confidence.overall),
            fmt(&s.confidence.mean_loss[0]),
            fmt(&s.confidence.mean_loss[1]),
        )
        .unwrap();
    }
    for m in &run.models {
        writeln!(
            out,
            "aggregate model={} f1_mean={:?} f1_std={:?} auc_mean={:?} auc_std={:?}",
            m.model, m.f1_mean, m.f1_std, m.auc_mean, m.auc_std
        )
        .unwrap();
    }
    let gc = run
        .gap_closure_mean
        .map_or("undefined".to_string(), |v| format!("{v:?}"));
    writeln!(out, "gap_closure_mean {gc}").unwrap();

    writeln!(
        out,
        "\n{:<10} {:>9} {:>9} {:>9} {:>9}",
        "model", "f1", "f1_sd", "auc", "auc_sd"
    )
    .unwrap();
    for m in &run.models {
        writeln!(
            out,
            "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            m.model, m.f1_mean, m.f1_std, m.auc_mean, m.auc_std
        )
        .unwrap();
    }
    out
}
