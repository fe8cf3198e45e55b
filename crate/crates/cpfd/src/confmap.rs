//! Mappings from per-sample teacher loss to the distillation weight alpha,
//! plus percentile calibration of their loss-range parameters from the
//! training-set teacher-loss distribution.

use crate::error::{Error, Result};

const BETA_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingKind {
    Threshold,
    NegSigmoid,
    Tanh,
    ExpDecay,
    /// Fixed alpha for every sample: vanilla PFD.
    Constant,
}

impl MappingKind {
    pub const ALL_ADAPTIVE: [MappingKind; 4] = [
        MappingKind::Threshold,
        MappingKind::NegSigmoid,
        MappingKind::Tanh,
        MappingKind::ExpDecay,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MappingKind::Threshold => "threshold",
            MappingKind::NegSigmoid => "neg_sigmoid",
            MappingKind::Tanh => "tanh",
            MappingKind::ExpDecay => "exp_decay",
            MappingKind::Constant => "constant",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(MappingKind::Threshold),
            "neg_sigmoid" => Ok(MappingKind::NegSigmoid),
            "tanh" => Ok(MappingKind::Tanh),
            "exp_decay" => Ok(MappingKind::ExpDecay),
            "constant" => Ok(MappingKind::Constant),
            _ => Err(Error::Config(format!("unknown mapping kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingConfig {
    pub kind: MappingKind,
    /// Threshold kind: loss cutoff.
    pub tau: f64,
    /// Steepness of the sigmoid/tanh kinds.
    pub beta: f64,
    pub l_center: f64,
    pub alpha_max: f64,
    pub alpha_min: f64,
    pub l_min: f64,
    pub l_max: f64,
    /// Constant kind only.
    pub constant_alpha: f64,
    /// Alphas emitted by the threshold kind below/above tau.
    pub threshold_high: f64,
    pub threshold_low: f64,
}

impl MappingConfig {
    pub fn constant(alpha: f64) -> Result<Self> {
        let cfg = MappingConfig {
            kind: MappingKind::Constant,
            constant_alpha: alpha,
            ..MappingConfig::base()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn base() -> Self {
        MappingConfig {
            kind: MappingKind::Constant,
            tau: 0.5,
            beta: 1.0,
            l_center: 0.5,
            alpha_max: 0.9,
            alpha_min: 0.1,
            l_min: 0.0,
            l_max: 1.0,
            constant_alpha: 0.5,
            threshold_high: 0.9,
            threshold_low: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        match self.kind {
            MappingKind::Threshold => {
                if self.tau <= 0.0 || !self.tau.is_finite() {
                    return Err(Error::Param(format!("tau must be positive, got {}", self.tau)));
                }
                if !in_unit(self.threshold_high) || !in_unit(self.threshold_low) {
                    return Err(Error::Param("threshold alphas must lie in [0,1]".into()));
                }
            }
            MappingKind::NegSigmoid | MappingKind::Tanh => {
                if self.beta <= 0.0 || !self.beta.is_finite() {
                    return Err(Error::Param(format!("beta must be positive, got {}", self.beta)));
                }
                if !self.l_center.is_finite() {
                    return Err(Error::Param("l_center must be finite".into()));
                }
            }
            MappingKind::ExpDecay => {
                if !(self.alpha_max > 0.0 && self.alpha_max <= 1.0) {
                    return Err(Error::Param(format!(
                        "alpha_max must lie in (0,1], got {}",
                        self.alpha_max
                    )));
                }
                if !(self.alpha_min >= 0.0 && self.alpha_min < self.alpha_max) {
                    return Err(Error::Param(format!(
                        "alpha_min must lie in [0, alpha_max), got {}",
                        self.alpha_min
                    )));
                }
                if !(self.l_max > self.l_min) {
                    return Err(Error::Param(format!(
                        "l_max {} must exceed l_min {}",
                        self.l_max, self.l_min
                    )));
                }
            }
            MappingKind::Constant => {
                if !in_unit(self.constant_alpha) {
                    return Err(Error::Param(format!(
                        "constant alpha must lie in [0,1], got {}",
                        self.constant_alpha
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Percentiles of the teacher-loss distribution over the training split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherStats {
    pub count: usize,
    pub p01: f64,
    pub p50: f64,
    pub p99: f64,
    pub mean: f64,
}

/// Nearest-rank percentiles of the teacher losses. Needs at least 100 values.
pub fn calibrate(teacher_losses: &[f64]) -> Result<TeacherStats> {
    if teacher_losses.len() < 100 {
        return Err(Error::Calibration(format!(
            "need at least 100 teacher losses, got {}",
            teacher_losses.len()
        )));
    }
    if let Some(bad) = teacher_losses.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Calibration(format!("teacher loss {bad} is not a nonnegative real")));
    }
    let mut sorted = teacher_losses.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nearest_rank = |p: f64| {
        let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
        sorted[rank.clamp(1, sorted.len()) - 1]
    };
    Ok(TeacherStats {
        count: sorted.len(),
        p01: nearest_rank(1.0),
        p50: nearest_rank(50.0),
        p99: nearest_rank(99.0),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
    })
}

/// Map one teacher loss to alpha. Always lands in [0,1] for a valid config.
pub fn map_alpha(config: &MappingConfig, l_teacher: f64) -> Result<f64> {
    config.validate()?;
    let alpha = match config.kind {
        MappingKind::Threshold => {
            if l_teacher < config.tau {
                config.threshold_high
            } else {
                config.threshold_low
            }
        }
        MappingKind::NegSigmoid => {
            1.0 / (1.0 + (config.beta * (l_teacher - config.l_center)).exp())
        }
        MappingKind::Tanh => {
            0.5 * ((-config.beta * (l_teacher - config.l_center)).tanh() + 1.0)
        }
        MappingKind::ExpDecay => {
            let l = l_teacher.clamp(config.l_min, config.l_max);
            let k = -(config.alpha_min.max(1e-12) / config.alpha_max).ln()
                / (config.l_max - config.l_min);
            config.alpha_max * (-k * (l - config.l_min)).exp()
        }
        MappingKind::Constant => config.constant_alpha,
    };
    Ok(alpha.clamp(0.0, 1.0))
}

/// Plug percentile stats into Table-2-style defaults for the given kind.
/// Degenerate distributions (p99 == p01) fall back to beta = 1 and a loss
/// range widened by +-0.5.
pub fn default_config_from_stats(kind: MappingKind, stats: &TeacherStats) -> MappingConfig {
    let mut cfg = MappingConfig { kind, ..MappingConfig::base() };
    let degenerate = stats.p99 == stats.p01;
    cfg.tau = if stats.p50 > 0.0 { stats.p50 } else { 1e-6 };
    cfg.l_center = stats.p50;
    cfg.beta = if degenerate { 1.0 } else { 4.0 / (stats.p99 - stats.p01 + BETA_EPS) };
    if degenerate {
        cfg.l_min = stats.p01 - 0.5;
        cfg.l_max = stats.p99 + 0.5;
    } else {
        cfg.l_min = stats.p01;
        cfg.l_max = stats.p99;
    }
    cfg.alpha_max = 0.9;
    cfg.alpha_min = 0.1;
    cfg
}
