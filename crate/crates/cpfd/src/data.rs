//! Synthetic privileged-feature datasets, train/eval splitting, dataset file
//! I/O, and export of frozen teacher outputs as distillation records.
//!
//! Samples share a latent vector h. Raw features are a noisy projection of h;
//! privileged features are a less noisy projection, optionally followed by a
//! few post-hoc coordinates that leak the label directly (signals that only
//! exist after the fact, e.g. user reports). Written eval splits have the
//! post-hoc block zeroed (`mask_post_hoc`) — those signals don't exist yet
//! when held-out rows are scored. The teacher's
//! advantage for distillation to transfer comes from the cleaner privileged
//! view of the latent, plus whatever leak is configured on the train side.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::losses::teacher_sample_loss;
use crate::ndcore::Matrix;
use crate::nn::TeacherModel;

pub const DATASET_HEADER: &str = "#privdistill-v1";
pub const DISTILL_HEADER: &str = "#privdistill-distill-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub raw: Vec<f64>,
    pub privileged: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub d_raw: usize,
    pub d_priv: usize,
    pub k: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn positive_rate(&self) -> f64 {
        let pos = self.samples.iter().filter(|s| s.label == 1).count();
        pos as f64 / self.samples.len() as f64
    }

    /// Raw features of the given samples as a batch matrix.
    pub fn raw_matrix(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.d_raw);
        for &i in idx {
            data.extend_from_slice(&self.samples[i].raw);
        }
        Matrix::new(idx.len(), self.d_raw, data).unwrap()
    }

    pub fn priv_matrix(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.d_priv);
        for &i in idx {
            data.extend_from_slice(&self.samples[i].privileged);
        }
        Matrix::new(idx.len(), self.d_priv, data).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n_samples: usize,
    pub d_latent: usize,
    pub d_raw: usize,
    /// Width of the informative (projection-of-h) privileged block; the
    /// post-hoc label-leaking coordinates come on top of this.
    pub d_priv: usize,
    pub d_posthoc: usize,
    pub positive_rate: f64,
    pub raw_noise_scale: f64,
    pub priv_noise_scale: f64,
    /// Strength of the post-hoc label leak.
    pub post_hoc_strength: f64,
    /// Control switch: make the privileged block an exact copy of the raw
    /// block (requires d_priv == d_raw), so privilege carries no extra
    /// signal whatsoever.
    pub priv_copies_raw: bool,
    pub seed: u64,
}

impl Default for GenConfig {
    /// Benchmark regime: raw features are an information-rich but noisy,
    /// high-dimensional view of the latent (hard to estimate from one pass),
    /// while the privileged block is a low-noise complete view. That is the
    /// setting where distillation has room to help a raw-only model.
    fn default() -> Self {
        GenConfig {
            n_samples: 24_000,
            d_latent: 32,
            d_raw: 128,
            d_priv: 48,
            d_posthoc: 2,
            positive_rate: 0.1,
            raw_noise_scale: 1.5,
            priv_noise_scale: 0.5,
            post_hoc_strength: 0.0,
            priv_copies_raw: false,
            seed: 1,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.d_latent == 0 || self.d_raw == 0 || self.d_priv == 0 {
            return Err(Error::Param("dataset dimensions must be positive".into()));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return Err(Error::Param(format!(
                "positive_rate must lie strictly in (0,1), got {}",
                self.positive_rate
            )));
        }
        if self.priv_noise_scale > self.raw_noise_scale {
            return Err(Error::Param(format!(
                "priv_noise_scale {} must not exceed raw_noise_scale {} \
                 (privileged features must be at least as informative)",
                self.priv_noise_scale, self.raw_noise_scale
            )));
        }
        if self.post_hoc_strength < 0.0 {
            return Err(Error::Param("post_hoc_strength must be nonnegative".into()));
        }
        if self.priv_copies_raw && self.d_priv != self.d_raw {
            return Err(Error::Param(format!(
                "priv_copies_raw requires d_priv == d_raw, got {} vs {}",
                self.d_priv, self.d_raw
            )));
        }
        Ok(())
    }

    /// Total privileged width as written to files.
    pub fn priv_width(&self) -> usize {
        self.d_priv + self.d_posthoc
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Generate a dataset. Labels are Bernoulli(sigmoid(w.h + b)) with b tuned by
/// bisection so the empirical positive rate lands within +-1% of the target.
pub fn generate(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // projection scale keeps per-coordinate signal near unit variance, so the
    // noise scales are meaningful relative to it
    let proj = 1.0 / (config.d_latent as f64).sqrt();
    let a: Vec<Vec<f64>> = (0..config.d_raw)
        .map(|_| (0..config.d_latent).map(|_| normal(&mut rng) * proj).collect())
        .collect();
    let b_mat: Vec<Vec<f64>> = (0..config.d_priv)
        .map(|_| (0..config.d_latent).map(|_| normal(&mut rng) * proj).collect())
        .collect();
    // unit-variance label logit: keeps class probabilities away from 0/1 so
    // labels stay genuinely stochastic given the latent
    let w: Vec<f64> = (0..config.d_latent).map(|_| normal(&mut rng) * proj).collect();

    let latents: Vec<Vec<f64>> = (0..config.n_samples)
        .map(|_| (0..config.d_latent).map(|_| normal(&mut rng)).collect())
        .collect();
    let uniforms: Vec<f64> = (0..config.n_samples).map(|_| rng.gen::<f64>()).collect();
    let scores: Vec<f64> = latents
        .iter()
        .map(|h| w.iter().zip(h).map(|(wi, hi)| wi * hi).sum())
        .collect();

    let count_pos = |bias: f64| -> usize {
        scores
            .iter()
            .zip(&uniforms)
            .filter(|(&z, &u)| u < sigmoid(z + bias))
            .count()
    };
    let target = config.positive_rate * config.n_samples as f64;
    let (mut lo, mut hi) = (-60.0_f64, 60.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (count_pos(mid) as f64) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bias = 0.5 * (lo + hi);
    let rate = count_pos(bias) as f64 / config.n_samples as f64;
    if (rate - config.positive_rate).abs() > 0.01 {
        return Err(Error::Param(format!(
            "could not calibrate positive rate: wanted {}, best achievable {rate}",
            config.positive_rate
        )));
    }

    let mut samples = Vec::with_capacity(config.n_samples);
    for (i, (h, (&z, &u))) in latents.iter().zip(scores.iter().zip(&uniforms)).enumerate() {
        let label = usize::from(u < sigmoid(z + bias));
        let project = |rows: &[Vec<f64>], scale: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
            rows.iter()
                .map(|row| {
                    let s: f64 = row.iter().zip(h).map(|(a, b)| a * b).sum();
                    s + scale * normal(rng)
                })
                .collect()
        };
        let raw = project(&a, config.raw_noise_scale, &mut rng);
        let mut privileged = if config.priv_copies_raw {
            raw.clone()
        } else {
            project(&b_mat, config.priv_noise_scale, &mut rng)
        };
        for _ in 0..config.d_posthoc {
            privileged.push(config.post_hoc_strength * label as f64 + normal(&mut rng));
        }
        samples.push(Sample { id: i as u64, raw, privileged, label });
    }

    Ok(Dataset { d_raw: config.d_raw, d_priv: config.priv_width(), k: 2, samples })
}

/// Zero the trailing post-hoc coordinates of every sample. Those features
/// only come into existence once the outcome has been observed, so held-out
/// rows scored as if at deployment time must not carry them.
pub fn mask_post_hoc(dataset: &mut Dataset, d_posthoc: usize) {
    let d = d_posthoc.min(dataset.d_priv);
    let start = dataset.d_priv - d;
    for s in &mut dataset.samples {
        for v in &mut s.privileged[start..] {
            *v = 0.0;
        }
    }
}

/// Deterministic stratified split into (train, eval). The eval side gets
/// `eval_fraction` of each class, so its positive rate tracks the overall one.
pub fn split(dataset: &Dataset, eval_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(Error::Param(format!(
            "eval_fraction must lie strictly in (0,1), got {eval_fraction}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.k];
    for (i, s) in dataset.samples.iter().enumerate() {
        by_class[s.label].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eval_idx = Vec::new();
    let mut train_idx = Vec::new();
    for mut idx in by_class {
        // Fisher-Yates via rand's shuffle would pull in slice ops tied to rng
        // word order; keep an explicit loop so the draw sequence is obvious.
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let n_eval = (eval_fraction * idx.len() as f64).round() as usize;
        eval_idx.extend_from_slice(&idx[..n_eval]);
        train_idx.extend_from_slice(&idx[n_eval..]);
    }
    if eval_idx.is_empty() || train_idx.is_empty() {
        return Err(Error::Param(format!(
            "eval_fraction {eval_fraction} leaves an empty split for {} samples",
            dataset.len()
        )));
    }
    eval_idx.sort_unstable();
    train_idx.sort_unstable();
    let pick = |idx: &[usize]| Dataset {
        d_raw: dataset.d_raw,
        d_priv: dataset.d_priv,
        k: dataset.k,
        samples: idx.iter().map(|&i| dataset.samples[i].clone()).collect(),
    };
    Ok((pick(&train_idx), pick(&eval_idx)))
}

/// Raw features + label + frozen teacher logits + the teacher's own loss.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillRecord {
    pub id: u64,
    pub raw: Vec<f64>,
    pub label: usize,
    pub teacher_logits: Vec<f64>,
    pub teacher_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillSet {
    pub d_raw: usize,
    pub k: usize,
    pub records: Vec<DistillRecord>,
}

impl DistillSet {
    pub fn teacher_losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.teacher_loss).collect()
    }
}

/// Freeze the teacher's outputs over the training split. Everything the
/// student needs is in the records; privileged features are left behind here.
pub fn export_distill(teacher: &TeacherModel, train: &Dataset) -> Result<DistillSet> {
    let mut records = Vec::with_capacity(train.len());
    let idx: Vec<usize> = (0..train.len()).collect();
    for chunk in idx.chunks(256) {
        let raw = train.raw_matrix(chunk);
        let privileged = train.priv_matrix(chunk);
        let logits = teacher.forward_batch(&raw, &privileged)?;
        for (row, &i) in chunk.iter().enumerate() {
            let s = &train.samples[i];
            let teacher_logits = logits.row(row).to_vec();
            let teacher_loss = teacher_sample_loss(&teacher_logits, s.label)?;
            records.push(DistillRecord {
                id: s.id,
                raw: s.raw.clone(),
                label: s.label,
                teacher_logits,
                teacher_loss,
            });
        }
    }
    Ok(DistillSet { d_raw: train.d_raw, k: train.k, records })
}

// ---- file formats -----------------------------------------------------------

fn fmt_floats(out: &mut String, values: &[f64]) {
    for v in values {
        // {:?} prints the shortest representation that round-trips exactly
        write!(out, ",{v:?}").unwrap();
    }
}

pub fn dataset_to_string(dataset: &Dataset) -> String {
    let mut out = format!(
        "{DATASET_HEADER} d_raw={} d_priv={} K={}\n",
        dataset.d_raw, dataset.d_priv, dataset.k
    );
    for s in &dataset.samples {
        write!(out, "{},{}", s.id, s.label).unwrap();
        fmt_floats(&mut out, &s.raw);
        fmt_floats(&mut out, &s.privileged);
        out.push('\n');
    }
    out
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, dataset_to_string(dataset).as_bytes())
}

fn header_value(header: &str, key: &str) -> Result<usize> {
    header
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(&format!("{key}=")))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Schema(format!("header missing {key}: '{header}'")))
}

pub fn dataset_from_string(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    if !header.starts_with(DATASET_HEADER) {
        return Err(Error::Schema(format!("not a dataset file: '{header}'")));
    }
    let d_raw = header_value(header, "d_raw")?;
    let d_priv = header_value(header, "d_priv")?;
    let k = header_value(header, "K")?;
    let mut samples = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + d_raw + d_priv {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} fields, found {}", 2 + d_raw + d_priv, fields.len()),
            });
        }
        let parse_f = |tok: &str| -> Result<f64> {
            tok.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad float '{tok}'"),
            })
        };
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| Error::Parse { line: lineno, msg: format!("bad id '{}'", fields[0]) })?;
        let label: usize = fields[1].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad label '{}'", fields[1]),
        })?;
        if label >= k {
            return Err(Error::Schema(format!("label {label} out of range for K={k}")));
        }
        let raw = fields[2..2 + d_raw].iter().map(|t| parse_f(t)).collect::<Result<Vec<_>>>()?;
        let privileged =
            fields[2 + d_raw..].iter().map(|t| parse_f(t)).collect::<Result<Vec<_>>>()?;
        samples.push(Sample { id, raw, privileged, label });
    }
    Ok(Dataset { d_raw, d_priv, k, samples })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_string(&std::fs::read_to_string(path)?)
}

pub fn distill_to_string(set: &DistillSet) -> String {
    let mut out = format!("{DISTILL_HEADER} d_raw={} K={}\n", set.d_raw, set.k);
    for r in &set.records {
        write!(out, "{},{}", r.id, r.label).unwrap();
        fmt_floats(&mut out, &r.raw);
        fmt_floats(&mut out, &r.teacher_logits);
        write!(out, ",{:?}", r.teacher_loss).unwrap();
        out.push('\n');
    }
    out
}

pub fn write_distill(set: &DistillSet, path: &Path) -> Result<()> {
    write_atomic(path, distill_to_string(set).as_bytes())
}

pub fn distill_from_string(text: &str) -> Result<DistillSet> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    if !header.starts_with(DISTILL_HEADER) {
        return Err(Error::Schema(format!("not a distill-record file: '{header}'")));
    }
    let d_raw = header_value(header, "d_raw")?;
    let k = header_value(header, "K")?;
    let mut records = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = 2 + d_raw + k + 1;
        if fields.len() != expected {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {expected} fields, found {}", fields.len()),
            });
        }
        let parse_f = |tok: &str| -> Result<f64> {
            tok.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad float '{tok}'"),
            })
        };
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| Error::Parse { line: lineno, msg: format!("bad id '{}'", fields[0]) })?;
        let label: usize = fields[1].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad label '{}'", fields[1]),
        })?;
        let raw = fields[2..2 + d_raw].iter().map(|t| parse_f(t)).collect::<Result<Vec<_>>>()?;
        let teacher_logits = fields[2 + d_raw..2 + d_raw + k]
            .iter()
            .map(|t| parse_f(t))
            .collect::<Result<Vec<_>>>()?;
        let teacher_loss = parse_f(fields[expected - 1])?;
        records.push(DistillRecord { id, raw, label, teacher_logits, teacher_loss });
    }
    Ok(DistillSet { d_raw, k, records })
}

pub fn read_distill(path: &Path) -> Result<DistillSet> {
    distill_from_string(&std::fs::read_to_string(path)?)
}

/// Write via a temp file + rename so readers never observe partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Fisher-discriminant linear probe: scores eval rows by the class-mean
/// difference direction, variance-normalized per coordinate. A cheap oracle
/// for "how much label signal do these features carry".
pub fn linear_probe_scores(
    train_rows: &[Vec<f64>],
    train_labels: &[usize],
    eval_rows: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if train_rows.len() != train_labels.len() || train_rows.is_empty() {
        return Err(Error::Shape("probe needs matching nonempty rows/labels".into()));
    }
    let d = train_rows[0].len();
    let mut mean = vec![[0.0f64; 2]; d];
    let mut count = [0usize; 2];
    for (row, &y) in train_rows.iter().zip(train_labels) {
        let y = y.min(1);
        count[y] += 1;
        for (j, &v) in row.iter().enumerate() {
            mean[j][y] += v;
        }
    }
    if count[0] == 0 || count[1] == 0 {
        return Err(Error::UndefinedMetric("probe needs both classes".into()));
    }
    for m in &mut mean {
        m[0] /= count[0] as f64;
        m[1] /= count[1] as f64;
    }
    let mut var = vec![0.0f64; d];
    for (row, &y) in train_rows.iter().zip(train_labels) {
        let y = y.min(1);
        for (j, &v) in row.iter().enumerate() {
            let dlt = v - mean[j][y];
            var[j] += dlt * dlt;
        }
    }
    let n = train_rows.len() as f64;
    let weights: Vec<f64> =
        (0..d).map(|j| (mean[j][1] - mean[j][0]) / (var[j] / n + 1e-9)).collect();
    Ok(eval_rows
        .iter()
        .map(|row| row.iter().zip(&weights).map(|(v, w)| v * w).sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::roc_auc;

    fn small_config() -> GenConfig {
        GenConfig { n_samples: 2_000, ..GenConfig::default() }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config();
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
    }

    #[test]
    fn positive_rate_is_calibrated() {
        let cfg = GenConfig { n_samples: 20_000, ..GenConfig::default() };
        let ds = generate(&cfg).unwrap();
        let rate = ds.positive_rate();
        assert!((0.09..=0.11).contains(&rate), "rate {rate}");
    }

    #[test]
    fn infeasible_positive_rate_is_rejected() {
        for rate in [0.0, 1.0, -0.2, 1.5] {
            let cfg = GenConfig { positive_rate: rate, ..small_config() };
            assert!(generate(&cfg).is_err());
        }
    }

    #[test]
    fn priv_copies_raw_duplicates_the_raw_block() {
        let cfg = GenConfig {
            d_priv: GenConfig::default().d_raw,
            priv_copies_raw: true,
            ..small_config()
        };
        let ds = generate(&cfg).unwrap();
        for s in &ds.samples {
            assert_eq!(s.privileged[..cfg.d_priv], s.raw);
        }
        let bad = GenConfig { priv_copies_raw: true, ..small_config() };
        assert!(generate(&bad).is_err());
    }

    #[test]
    fn mask_post_hoc_zeroes_only_the_trailing_block() {
        let cfg = small_config();
        let ds = generate(&cfg).unwrap();
        let mut masked = ds.clone();
        mask_post_hoc(&mut masked, cfg.d_posthoc);
        let keep = cfg.d_priv;
        for (orig, m) in ds.samples.iter().zip(&masked.samples) {
            assert_eq!(orig.raw, m.raw);
            assert_eq!(orig.privileged[..keep], m.privileged[..keep]);
            assert!(m.privileged[keep..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn split_is_a_stratified_partition() {
        let ds = generate(&small_config()).unwrap();
        let (train, eval) = split(&ds, 0.1, 5).unwrap();
        assert_eq!(train.len() + eval.len(), ds.len());
        let mut ids: Vec<u64> = train.samples.iter().chain(&eval.samples).map(|s| s.id).collect();
        ids.sort_unstable();
        let mut expected: Vec<u64> = ds.samples.iter().map(|s| s.id).collect();
        expected.sort_unstable();
        assert_eq!(ids, expected);

        let total_pos = ds.samples.iter().filter(|s| s.label == 1).count();
        let eval_pos = eval.samples.iter().filter(|s| s.label == 1).count();
        let expected_pos = (0.1 * total_pos as f64).round() as usize;
        assert!(eval_pos.abs_diff(expected_pos) <= 1);
        assert!((eval.positive_rate() - ds.positive_rate()).abs() <= 0.01);
    }

    #[test]
    fn split_sizes_match_fraction() {
        let cfg = GenConfig { n_samples: 1_000, ..GenConfig::default() };
        let ds = generate(&cfg).unwrap();
        let (train, eval) = split(&ds, 0.1, 0).unwrap();
        assert_eq!(eval.len(), 100);
        assert_eq!(train.len(), 900);
    }

    #[test]
    fn bad_fraction_is_rejected() {
        let ds = generate(&small_config()).unwrap();
        assert!(split(&ds, 0.0, 0).is_err());
        assert!(split(&ds, 1.0, 0).is_err());
    }

    #[test]
    fn dataset_roundtrip() {
        let ds = generate(&small_config()).unwrap();
        let text = dataset_to_string(&ds);
        assert_eq!(dataset_from_string(&text).unwrap(), ds);
    }

    #[test]
    fn truncated_line_names_its_line_number() {
        let ds = generate(&GenConfig { n_samples: 1_000, ..GenConfig::default() }).unwrap();
        let mut text = dataset_to_string(&ds);
        // chop the last line short (keep the trailing newline)
        let cut = text.trim_end().rfind(',').unwrap();
        text.truncate(cut);
        text.push('\n');
        match dataset_from_string(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1001),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_width_is_rejected() {
        let text = format!(
            "{DATASET_HEADER} d_raw=2 d_priv=1 K=2\n0,0,1.0,2.0,3.0\n1,1,1.0,2.0\n"
        );
        assert!(dataset_from_string(&text).is_err());
    }

    #[test]
    fn distill_roundtrip_and_consistency() {
        let ds = generate(&GenConfig { n_samples: 500, ..GenConfig::default() }).unwrap();
        let teacher = TeacherModel::init(
            crate::nn::default_raw_spec(ds.d_raw),
            crate::nn::default_priv_spec(ds.d_priv),
            ds.k,
            3,
        )
        .unwrap();
        let set = export_distill(&teacher, &ds).unwrap();
        assert_eq!(set.records.len(), ds.len());
        for r in &set.records {
            let rederived = teacher_sample_loss(&r.teacher_logits, r.label).unwrap();
            assert!((rederived - r.teacher_loss).abs() < 1e-9);
        }
        let text = distill_to_string(&set);
        assert_eq!(distill_from_string(&text).unwrap(), set);
    }

    #[test]
    fn privileged_probe_beats_raw_probe_when_leak_is_on() {
        let mut wins = 0;
        for seed in 1..=5 {
            let cfg = GenConfig {
                n_samples: 4_000,
                seed,
                post_hoc_strength: 2.0,
                ..GenConfig::default()
            };
            let ds = generate(&cfg).unwrap();
            let (train, eval) = split(&ds, 0.25, seed).unwrap();
            let labels = train.labels();
            let eval_labels: Vec<usize> = eval.labels();
            let raw_rows: Vec<Vec<f64>> = train.samples.iter().map(|s| s.raw.clone()).collect();
            let priv_rows: Vec<Vec<f64>> =
                train.samples.iter().map(|s| s.privileged.clone()).collect();
            let eval_raw: Vec<Vec<f64>> = eval.samples.iter().map(|s| s.raw.clone()).collect();
            let eval_priv: Vec<Vec<f64>> =
                eval.samples.iter().map(|s| s.privileged.clone()).collect();
            let auc_raw = roc_auc(
                &linear_probe_scores(&raw_rows, &labels, &eval_raw).unwrap(),
                &eval_labels,
            )
            .unwrap();
            let auc_priv = roc_auc(
                &linear_probe_scores(&priv_rows, &labels, &eval_priv).unwrap(),
                &eval_labels,
            )
            .unwrap();
            if auc_priv > auc_raw {
                wins += 1;
            }
        }
        assert!(wins >= 3, "privileged probe won only {wins}/5 seeds");
    }
}
