//! Acceptance gate: one test per criterion, each printing a single
//! pass/fail line. Oracles here are deliberately naive re-implementations
//! (pairwise ROC counting, per-threshold PR recomputation, unshifted
//! softmax, direct mapping formulas) so they share no code with the crate.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use cpfd::cli::{cmd_sweep, run_benchmark, ExperimentConfig, RunReport, SweepAxis};
use cpfd::confmap::{calibrate, map_alpha, MappingConfig, MappingKind};
use cpfd::data::{generate, split, GenConfig};
use cpfd::losses::{batch_student_loss, combined_loss, kl_distill, teacher_sample_loss, BatchItem};
use cpfd::metrics::{best_f1, f1, hit_rate, pr_auc, roc_auc};
use cpfd::ndcore::{GradTape, Matrix};
use cpfd::nn::{MlpSpec, StudentModel};
use cpfd::train::{train_student, Mode, TrainConfig};

fn verdict(n: usize, label: &str, pass: bool, detail: &str) {
    println!(
        "acceptance criterion {n} ({label}): {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} ({label}) failed: {detail}");
}

// ---------------------------------------------------------------- criterion 1

fn oracle_roc(scores: &[f64], labels: &[usize]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, (&sp, &yp)) in scores.iter().zip(labels).enumerate() {
        if yp != 1 {
            continue;
        }
        for (j, (&sn, &yn)) in scores.iter().zip(labels).enumerate() {
            if yn != 0 || i == j {
                continue;
            }
            pairs += 1.0;
            if sp > sn {
                num += 1.0;
            } else if sp == sn {
                num += 0.5;
            }
        }
    }
    num / pairs
}

fn oracle_pr(scores: &[f64], labels: &[usize]) -> f64 {
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &t in &thresholds {
        let tp = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &y)| s >= t && y == 1)
            .count() as f64;
        let predicted = scores.iter().filter(|&&s| s >= t).count() as f64;
        let recall = tp / n_pos;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

fn oracle_f1(scores: &[f64], labels: &[usize], threshold: f64) -> f64 {
    let tp = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| s >= threshold && y == 1)
        .count() as f64;
    let predicted = scores.iter().filter(|&&s| s >= threshold).count() as f64;
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    if predicted == 0.0 || n_pos == 0.0 || tp == 0.0 {
        return 0.0;
    }
    let p = tp / predicted;
    let r = tp / n_pos;
    2.0 * p * r / (p + r)
}

fn oracle_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let exps: Vec<f64> = logits.iter().map(|z| (z / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<usize>) {
    let n = rng.gen_range(2..=60);
    let quantize = rng.gen_bool(0.5);
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let s: f64 = rng.gen();
        // coarse quantization forces tie groups, stressing the rank averaging
        scores.push(if quantize { (s * 4.0).round() / 4.0 } else { s });
        labels.push(usize::from(rng.gen_bool(0.4)));
    }
    // ensure both classes are present
    labels[0] = 1;
    labels[1] = 0;
    (scores, labels)
}

#[test]
fn criterion_1_oracle_suite() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checks = 0usize;

    for _ in 0..1000 {
        let (scores, labels) = random_instance(&mut rng);
        let auc = roc_auc(&scores, &labels).unwrap();
        assert!((auc - oracle_roc(&scores, &labels)).abs() < 1e-12, "roc");
        let ap = pr_auc(&scores, &labels).unwrap();
        assert!((ap - oracle_pr(&scores, &labels)).abs() < 1e-12, "pr");
        let t = scores[rng.gen_range(0..scores.len())];
        let f = f1(&scores, &labels, t).unwrap();
        assert!((f - oracle_f1(&scores, &labels, t)).abs() < 1e-12, "f1");
        let (bf, bt) = best_f1(&scores, &labels).unwrap();
        let oracle_best = scores
            .iter()
            .map(|&t| oracle_f1(&scores, &labels, t))
            .fold(0.0f64, f64::max);
        assert!((bf - oracle_best).abs() < 1e-12, "best_f1 value");
        assert!((bf - oracle_f1(&scores, &labels, bt)).abs() < 1e-12, "best_f1 threshold");
        let (hr, recalled) = hit_rate(&scores, &labels, t).unwrap();
        let above: Vec<usize> = scores
            .iter()
            .zip(&labels)
            .filter(|(&s, _)| s >= t)
            .map(|(_, &y)| y)
            .collect();
        assert_eq!(recalled, above.len());
        let expect = above.iter().sum::<usize>() as f64 / above.len() as f64;
        assert!((hr - expect).abs() < 1e-12, "hit_rate");
        checks += 1;
    }

    for _ in 0..1000 {
        let stats_src: Vec<f64> = (0..rng.gen_range(100..400)).map(|_| rng.gen::<f64>() * 3.0).collect();
        let stats = calibrate(&stats_src).unwrap();
        let mut sorted = stats_src.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let nr = |p: f64| sorted[(p * sorted.len() as f64).ceil() as usize - 1];
        assert_eq!(stats.p01, nr(0.01), "calibrate p01");
        assert_eq!(stats.p50, nr(0.50), "calibrate p50");
        assert_eq!(stats.p99, nr(0.99), "calibrate p99");

        let l: f64 = rng.gen::<f64>() * 4.0;
        let tau = rng.gen::<f64>() + 0.1;
        let beta = rng.gen::<f64>() * 5.0 + 0.1;
        let center = rng.gen::<f64>() * 2.0;
        let (a_max, a_min) = (rng.gen::<f64>() * 0.5 + 0.5, rng.gen::<f64>() * 0.3);
        let (l_min, l_max) = (rng.gen::<f64>(), rng.gen::<f64>() + 1.5);
        let base = MappingConfig::constant(0.5).unwrap();

        let cfg = MappingConfig { kind: MappingKind::Threshold, tau, ..base.clone() };
        let expect = if l < tau { 0.9 } else { 0.1 };
        assert_eq!(map_alpha(&cfg, l).unwrap(), expect, "threshold");

        let cfg = MappingConfig {
            kind: MappingKind::NegSigmoid,
            beta,
            l_center: center,
            ..base.clone()
        };
        let expect = 1.0 / (1.0 + (beta * (l - center)).exp());
        assert!((map_alpha(&cfg, l).unwrap() - expect).abs() < 1e-12, "neg_sigmoid");

        let cfg = MappingConfig { kind: MappingKind::Tanh, beta, l_center: center, ..base.clone() };
        let expect = 0.5 * (1.0 + (-beta * (l - center)).tanh());
        assert!((map_alpha(&cfg, l).unwrap() - expect).abs() < 1e-12, "tanh");

        let cfg = MappingConfig {
            kind: MappingKind::ExpDecay,
            alpha_max: a_max,
            alpha_min: a_min,
            l_min,
            l_max,
            ..base.clone()
        };
        let lc = l.clamp(l_min, l_max);
        let k = -(a_min.max(1e-12) / a_max).ln() / (l_max - l_min);
        let expect = a_max * (-k * (lc - l_min)).exp();
        assert!((map_alpha(&cfg, l).unwrap() - expect).abs() < 1e-12, "exp_decay");

        let (lc_, ld, a) = (rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0, rng.gen::<f64>());
        let expect = (1.0 - a) * lc_ + a * ld;
        assert!((combined_loss(lc_, ld, a).unwrap() - expect).abs() < 1e-12, "combined");
        checks += 1;
    }

    for _ in 0..1000 {
        let k = rng.gen_range(2..=5);
        let t = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
        // range keeps the smallest temperature-scaled probability above the
        // implementation's log clamp, so exact and clamped logs agree
        let zt: Vec<f64> = (0..k).map(|_| (rng.gen::<f64>() - 0.5) * 12.0).collect();
        let zs: Vec<f64> = (0..k).map(|_| (rng.gen::<f64>() - 0.5) * 12.0).collect();
        let y = rng.gen_range(0..k);

        let probs = oracle_softmax(&zs, 1.0);
        let expect_ce = -probs[y].ln();
        assert!((teacher_sample_loss(&zs, y).unwrap() - expect_ce).abs() < 1e-9, "ce");

        let qt = oracle_softmax(&zt, t);
        let qs = oracle_softmax(&zs, t);
        let expect_kl: f64 = t
            * t
            * qt.iter().zip(&qs).map(|(&a, &b)| a * (a.ln() - b.ln())).sum::<f64>();
        assert!((kl_distill(&zt, &zs, t).unwrap() - expect_kl).abs() < 1e-9, "kl");

        let a = rng.gen::<f64>();
        let items = [BatchItem { student_logits: &zs, teacher_logits: &zt, label: y, alpha: a }];
        let bd = batch_student_loss(&items, t).unwrap();
        let expect = (1.0 - a) * expect_ce + a * expect_kl;
        assert!((bd.l_student - expect).abs() < 1e-9, "batch combination");
        checks += 1;
    }

    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "oracle suite",
        secs < 30.0,
        &format!("{checks} instances matched brute-force oracles in {secs:.1}s"),
    );
}

// ---------------------------------------------------------------- criterion 2

/// Analytic vs central finite-difference gradient, relative to the larger of
/// the two magnitudes with an absolute floor for near-zero entries.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[test]
fn criterion_2_gradient_suite() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut instances = 0usize;
    let mut worst = 0.0f64;
    let h = 1e-5;

    // cross_entropy through softmax, mean over the batch
    for _ in 0..40 {
        let (rows, k) = (rng.gen_range(1..=6), rng.gen_range(2..=5));
        let data: Vec<f64> = (0..rows * k).map(|_| (rng.gen::<f64>() - 0.5) * 6.0).collect();
        let labels: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..k)).collect();
        let logits = Matrix::new(rows, k, data.clone()).unwrap();

        let mut tape = GradTape::new();
        let v = tape.leaf(logits);
        let ce = tape.ce_softmax(v, &labels).unwrap();
        let loss = tape.mean(ce);
        tape.backward(loss, &Matrix::new(1, 1, vec![1.0]).unwrap()).unwrap();
        let grad = tape.grad(v).unwrap().clone();

        let eval = |d: &[f64]| {
            let mut total = 0.0;
            for (r, &y) in labels.iter().enumerate() {
                let p = oracle_softmax(&d[r * k..(r + 1) * k], 1.0);
                total -= p[y].ln();
            }
            total / rows as f64
        };
        for i in 0..data.len() {
            let mut lo = data.clone();
            let mut hi = data.clone();
            lo[i] -= h;
            hi[i] += h;
            let numeric = (eval(&hi) - eval(&lo)) / (2.0 * h);
            worst = worst.max(rel_err(grad.data()[i], numeric));
        }
        instances += 1;
    }

    // kl_distill via the fused distill objective at alpha = 1
    for &t in &[0.5, 1.0, 2.0] {
        for _ in 0..15 {
            let (rows, k) = (rng.gen_range(1..=5), rng.gen_range(2..=4));
            let sd: Vec<f64> = (0..rows * k).map(|_| (rng.gen::<f64>() - 0.5) * 6.0).collect();
            let td: Vec<f64> = (0..rows * k).map(|_| (rng.gen::<f64>() - 0.5) * 6.0).collect();
            let labels: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..k)).collect();
            // alpha = 1 isolates the KL term; mixed alphas exercise the sum
            let alphas: Vec<f64> =
                if rng.gen_bool(0.5) { vec![1.0; rows] } else { (0..rows).map(|_| rng.gen()).collect() };
            let teacher = Matrix::new(rows, k, td.clone()).unwrap();

            let mut tape = GradTape::new();
            let v = tape.leaf(Matrix::new(rows, k, sd.clone()).unwrap());
            let obj = tape.distill_objective(v, &teacher, &labels, &alphas, t).unwrap();
            tape.backward(obj, &Matrix::new(1, 1, vec![1.0]).unwrap()).unwrap();
            let grad = tape.grad(v).unwrap().clone();

            let eval = |d: &[f64]| {
                let mut total = 0.0;
                for r in 0..rows {
                    let zs = &d[r * k..(r + 1) * k];
                    let ps = oracle_softmax(zs, 1.0);
                    let qt = oracle_softmax(&td[r * k..(r + 1) * k], t);
                    let qs = oracle_softmax(zs, t);
                    let kl: f64 =
                        t * t * qt.iter().zip(&qs).map(|(&a, &b)| a * (a.ln() - b.ln())).sum::<f64>();
                    total += (1.0 - alphas[r]) * -ps[labels[r]].ln() + alphas[r] * kl;
                }
                total / rows as f64
            };
            for i in 0..sd.len() {
                let mut lo = sd.clone();
                let mut hi = sd.clone();
                lo[i] -= h;
                hi[i] += h;
                let numeric = (eval(&hi) - eval(&lo)) / (2.0 * h);
                worst = worst.max(rel_err(grad.data()[i], numeric));
            }
            instances += 1;
        }
    }

    // full student objective end to end, differentiated w.r.t. every weight
    for case in 0..20 {
        let (d_in, rows, k) = (4, 5, 2);
        let t = [0.5, 1.0, 2.0][case % 3];
        let model = StudentModel::init(MlpSpec::new(vec![d_in, 6, 4]).unwrap(), k, case as u64).unwrap();
        let x = Matrix::new(rows, d_in, (0..rows * d_in).map(|_| rng.gen::<f64>() - 0.5).collect())
            .unwrap();
        let teacher =
            Matrix::new(rows, k, (0..rows * k).map(|_| (rng.gen::<f64>() - 0.5) * 4.0).collect())
                .unwrap();
        let labels: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..k)).collect();
        let alphas: Vec<f64> = (0..rows).map(|_| rng.gen()).collect();

        let eval = |m: &StudentModel| {
            let logits = m.forward_batch(&x).unwrap();
            let items: Vec<BatchItem> = (0..rows)
                .map(|r| BatchItem {
                    student_logits: logits.row(r),
                    teacher_logits: teacher.row(r),
                    label: labels[r],
                    alpha: alphas[r],
                })
                .collect();
            batch_student_loss(&items, t).unwrap().l_student
        };

        let mut tape = GradTape::new();
        let xv = tape.leaf(x.clone());
        let mut params = Vec::new();
        let logits = model.forward_tape(&mut tape, xv, &mut params).unwrap();
        let obj = tape.distill_objective(logits, &teacher, &labels, &alphas, t).unwrap();
        tape.backward(obj, &Matrix::new(1, 1, vec![1.0]).unwrap()).unwrap();
        let grads: Vec<Matrix> = params.iter().map(|&p| tape.grad(p).unwrap().clone()).collect();

        let mut probe = model.clone();
        for (pi, grad) in grads.iter().enumerate() {
            for i in 0..grad.data().len() {
                let base = probe.params_mut()[pi].data()[i];
                probe.params_mut()[pi].data_mut()[i] = base + h;
                let up = eval(&probe);
                probe.params_mut()[pi].data_mut()[i] = base - h;
                let down = eval(&probe);
                probe.params_mut()[pi].data_mut()[i] = base;
                let numeric = (up - down) / (2.0 * h);
                worst = worst.max(rel_err(grad.data()[i], numeric));
            }
        }
        instances += 1;
    }

    let secs = start.elapsed().as_secs_f64();
    verdict(
        2,
        "gradient suite",
        worst < 1e-4 && instances >= 100 && secs < 60.0,
        &format!("{instances} instances, worst relative error {worst:.2e}, {secs:.1}s"),
    );
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_mode_identities() {
    let start = std::time::Instant::now();
    let gen = GenConfig { n_samples: 2000, seed: 5, ..GenConfig::default() };
    let dataset = generate(&gen).unwrap();
    let (train, eval) = split(&dataset, 0.2, 5).unwrap();
    let teacher_cfg = TrainConfig { epochs: 4, ..TrainConfig::defaults(Mode::Teacher, 5) };
    let raw_spec = cpfd::nn::default_raw_spec(gen.d_raw);
    let priv_spec = cpfd::nn::default_priv_spec(gen.priv_width());
    let (teacher, _) =
        cpfd::train::train_teacher(&teacher_cfg, raw_spec.clone(), priv_spec, &train, &eval)
            .unwrap();
    let records = cpfd::data::export_distill(&teacher, &train).unwrap();

    let fit = |mode: Mode, alpha: f64, mapping: Option<MappingConfig>| {
        let cfg = TrainConfig {
            epochs: 6,
            alpha,
            mapping,
            ..TrainConfig::defaults(mode, 5)
        };
        let (_, log) = train_student(&cfg, raw_spec.clone(), &records, &eval, None).unwrap();
        log
    };

    let plain = fit(Mode::Plain, 0.5, None);
    let pfd_zero = fit(Mode::Pfd, 0.0, None);
    let pfd_mid = fit(Mode::Pfd, 0.4, None);
    let cpfd_const = fit(Mode::Cpfd, 0.5, Some(MappingConfig::constant(0.4).unwrap()));

    let zero_matches = plain.same_trajectory(&pfd_zero);
    let const_matches = pfd_mid.same_trajectory(&cpfd_const);
    // bit-exact serialized trajectories, modulo the header (its config hash
    // encodes the mode) and the wall clock
    let strip = |log: &cpfd::train::TrainLog| {
        log.to_text()
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("wall_clock"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let text_matches = strip(&plain) == strip(&pfd_zero) && strip(&pfd_mid) == strip(&cpfd_const);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        3,
        "mode identities",
        zero_matches && const_matches && text_matches && secs < 120.0,
        &format!(
            "plain==pfd(0): {zero_matches}, pfd(0.4)==cpfd(constant 0.4): {const_matches}, logs bit-exact: {text_matches}, {secs:.1}s"
        ),
    );
}

// ------------------------------------------------- shared benchmark fixture

struct Fixture {
    _dir: TempDir,
    out: std::path::PathBuf,
    config: ExperimentConfig,
    report: RunReport,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let out = dir.path().join("runs");
        let config = ExperimentConfig::default();
        let report = run_benchmark(&config, &out).unwrap();
        Fixture { out, config, report, _dir: dir }
    })
}

fn f1_of(report: &RunReport, model: &str) -> f64 {
    report.models.iter().find(|m| m.model == model).unwrap().f1_mean
}

fn auc_of(report: &RunReport, model: &str) -> f64 {
    report.models.iter().find(|m| m.model == model).unwrap().auc_mean
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_directional_benchmark() {
    let start = std::time::Instant::now();
    let fx = fixture();
    let (teacher, cpfd, pfd, plain) = (
        f1_of(&fx.report, "teacher"),
        f1_of(&fx.report, "cpfd"),
        f1_of(&fx.report, "pfd"),
        f1_of(&fx.report, "plain"),
    );
    let ordered = teacher > cpfd && cpfd >= pfd && pfd > plain;
    let gap = teacher - plain;
    let closure = (cpfd - plain) / gap;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        4,
        "directional benchmark",
        ordered && gap >= 0.03 && closure >= 0.5 && secs < 600.0,
        &format!(
            "F1 teacher {teacher:.4} > cpfd {cpfd:.4} >= pfd {pfd:.4} > plain {plain:.4}: {ordered}; gap {gap:.4}, closure {closure:.3}, {secs:.0}s"
        ),
    );
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_confidence_correlation() {
    let fx = fixture();
    let mut detail = String::new();
    let mut pass = true;
    for s in &fx.report.seeds {
        let correct = s.confidence.overall[0].unwrap();
        let incorrect = s.confidence.overall[1].unwrap();
        pass &= incorrect >= 2.0 * correct;
        detail.push_str(&format!("seed {}: {:.3}/{:.3}; ", s.seed, incorrect, correct));
    }
    verdict(5, "confidence correlation", pass, &format!("incorrect/correct mean teacher loss {detail}"));
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_ablation_sweeps() {
    let start = std::time::Instant::now();
    let fx = fixture();
    let mapping =
        cmd_sweep(&fx.config, SweepAxis::Mapping, &fx.config.seeds, &fx.out, false).unwrap();
    let temperature =
        cmd_sweep(&fx.config, SweepAxis::Temperature, &fx.config.seeds, &fx.out, false).unwrap();

    let kinds_complete = mapping.rows.len() == 4
        && ["threshold", "neg_sigmoid", "tanh", "exp_decay"]
            .iter()
            .all(|k| mapping.rows.iter().any(|r| &r.label == k));
    let aucs: Vec<f64> = mapping.rows.iter().map(|r| r.auc_mean).collect();
    let spread = aucs.iter().cloned().fold(f64::MIN, f64::max)
        - aucs.iter().cloned().fold(f64::MAX, f64::min);
    let improvement = auc_of(&fx.report, "cpfd") - auc_of(&fx.report, "plain");
    let temp_complete = temperature.rows.len() == 3
        && temperature.rows.iter().all(|r| r.cells.len() == fx.config.seeds.len());
    let secs = start.elapsed().as_secs_f64();
    verdict(
        6,
        "ablation sweeps",
        kinds_complete && spread < improvement && temp_complete && secs < 1800.0,
        &format!(
            "4 mapping kinds: {kinds_complete}, AUC spread {spread:.4} < cpfd-plain improvement {improvement:.4}; temperature table complete: {temp_complete}, {secs:.0}s"
        ),
    );
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_cli_determinism() {
    let bin = env!("CARGO_BIN_EXE_cpfd");
    let dir = TempDir::new().unwrap();
    let cfg_path = dir.path().join("exp.cfg");
    std::fs::write(&cfg_path, "gen.n_samples = 2000\nseeds = 1\ntrain.epochs = 4\n").unwrap();

    let run = |out: &Path| {
        for args in [
            vec!["gen"],
            vec!["train-teacher"],
            vec!["export-distill"],
            vec!["train-student", "--mode", "plain"],
            vec!["train-student", "--mode", "cpfd"],
            vec!["eval", "--model", "cpfd"],
            vec!["analyze"],
        ] {
            let status = Command::new(bin)
                .args(&args)
                .arg("--config")
                .arg(&cfg_path)
                .arg("--out")
                .arg(out)
                .status()
                .unwrap();
            assert!(status.success(), "command {args:?} failed");
        }
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a);
    run(&b);

    fn collect(root: &Path, base: &Path, files: &mut Vec<std::path::PathBuf>) {
        for entry in std::fs::read_dir(root).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                collect(&path, base, files);
            } else {
                files.push(path.strip_prefix(base).unwrap().to_path_buf());
            }
        }
    }
    let mut files_a = Vec::new();
    collect(&a, &a, &mut files_a);
    files_a.sort();
    // train logs record wall-clock time; the criterion covers data files,
    // checkpoints and reports, whose bytes must match exactly
    files_a.retain(|p| p.extension().map_or(true, |e| e != "trainlog"));
    let mut identical = !files_a.is_empty();
    for rel in &files_a {
        let same = std::fs::read(a.join(rel)).unwrap() == std::fs::read(b.join(rel)).unwrap();
        assert!(same, "artifact {} differs between reruns", rel.display());
        identical &= same;
    }
    verdict(
        7,
        "determinism",
        identical,
        &format!("{} artifacts byte-identical across independent reruns", files_a.len()),
    );
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_control_experiment() {
    let dir = TempDir::new().unwrap();
    let mut config = ExperimentConfig::default();
    // uninformative privilege: no post-hoc block at all, privileged noise
    // equal to raw, and the privileged block an exact copy of the raw block
    config.gen.post_hoc_strength = 0.0;
    config.gen.d_posthoc = 0;
    config.gen.priv_noise_scale = config.gen.raw_noise_scale;
    config.gen.priv_copies_raw = true;
    config.gen.d_priv = config.gen.d_raw;
    let report = run_benchmark(&config, dir.path()).unwrap();

    let gaps: Vec<f64> = report
        .seeds
        .iter()
        // the teacher-minus-plain-student gap is the gap the distilled modes
        // try to close; with no privileged signal it should be pure noise
        .map(|s| s.teacher.best_f1 - s.plain.best_f1)
        .collect();
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let var = gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (n - 1.0);
    let stderr = (var / n).sqrt();
    verdict(
        8,
        "control experiment",
        mean.abs() < stderr,
        &format!("teacher-plain F1 gap mean {mean:.4} vs standard error {stderr:.4} over {n} seeds"),
    );
}
