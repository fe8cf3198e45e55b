//! Command-line front end for the privileged-feature distillation pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cpfd::cli::{
    cmd_analyze, cmd_eval, cmd_export_distill, cmd_gen, cmd_sweep, cmd_train_student,
    cmd_train_teacher, ExperimentConfig, SweepAxis,
};
use cpfd::train::Mode;
use cpfd::Result;

#[derive(Parser)]
#[command(
    name = "cpfd",
    about = "Privileged-feature distillation experiments: synthetic data, \
             teacher/student training, confidence-weighted distillation, \
             evaluation and ablation sweeps."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (key = value lines); defaults apply if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Restrict to one seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory root.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Overwrite existing outputs instead of refusing.
    #[arg(long)]
    force: bool,
    /// Upper bound on parallel work (currently runs sequentially).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and split the synthetic dataset.
    Gen(Common),
    /// Train the all-features teacher.
    TrainTeacher(Common),
    /// Freeze teacher logits and losses over the training split.
    ExportDistill(Common),
    /// Train a raw-features student.
    TrainStudent {
        #[command(flatten)]
        common: Common,
        /// plain, pfd or cpfd.
        #[arg(long)]
        mode: String,
    },
    /// Score a trained model on the eval split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// teacher, plain, pfd or cpfd.
        #[arg(long)]
        model: String,
    },
    /// Confidence table and alpha-curve tables from the cpfd student.
    Analyze(Common),
    /// Ablation sweep over mapping kinds, temperatures or fixed alphas.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// mapping, temperature or alpha.
        #[arg(long)]
        axis: String,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, Vec<u64>)> {
    if common.jobs == 0 {
        return Err(cpfd::Error::Config("--jobs must be at least 1".into()));
    }
    let config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let seeds = match common.seed {
        Some(s) => vec![s],
        None => config.seeds.clone(),
    };
    Ok((config, seeds))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(common) => {
            let (config, seeds) = load(&common)?;
            for seed in seeds {
                let layout = cmd_gen(&config, seed, &common.out, common.force)?;
                println!("gen seed={seed} -> {}", layout.dir.display());
            }
        }
        Command::TrainTeacher(common) => {
            let (config, seeds) = load(&common)?;
            for seed in seeds {
                cmd_train_teacher(&config, seed, &common.out, common.force)?;
                println!("train-teacher seed={seed} done");
            }
        }
        Command::ExportDistill(common) => {
            let (config, seeds) = load(&common)?;
            for seed in seeds {
                let records = cmd_export_distill(&config, seed, &common.out, common.force)?;
                println!("export-distill seed={seed} records={}", records.records.len());
            }
        }
        Command::TrainStudent { common, mode } => {
            let (config, seeds) = load(&common)?;
            let mode = Mode::parse(&mode)?;
            for seed in seeds {
                cmd_train_student(&config, mode, seed, &common.out, common.force)?;
                println!("train-student mode={} seed={seed} done", mode.name());
            }
        }
        Command::Eval { common, model } => {
            let (config, seeds) = load(&common)?;
            for seed in seeds {
                let rpt = cmd_eval(&config, &model, seed, &common.out, common.force)?;
                println!(
                    "eval model={model} seed={seed} roc_auc={:.4} pr_auc={:.4} best_f1={:.4} hit_rate={:.4}",
                    rpt.roc_auc, rpt.pr_auc, rpt.best_f1, rpt.hit_rate
                );
            }
        }
        Command::Analyze(common) => {
            let (config, seeds) = load(&common)?;
            for seed in seeds {
                cmd_analyze(&config, seed, &common.out, common.force)?;
                println!("analyze seed={seed} done");
            }
        }
        Command::Sweep { common, axis } => {
            let (config, seeds) = load(&common)?;
            let axis = SweepAxis::parse(&axis)?;
            let sweep = cmd_sweep(&config, axis, &seeds, &common.out, common.force)?;
            for row in &sweep.rows {
                println!(
                    "sweep {}={} auc={:.4}+-{:.4} f1={:.4}+-{:.4}",
                    axis.name(),
                    row.label,
                    row.auc_mean,
                    row.auc_std,
                    row.f1_mean,
                    row.f1_std
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}
