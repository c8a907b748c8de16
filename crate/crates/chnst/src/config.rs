//! `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored. Every
//! key is optional; the defaults are the convergence-test setup.

use std::collections::HashMap;
use std::path::PathBuf;
use std::str::FromStr;

use chnst_core::harness::{self, Preset};
use chnst_core::model::{ModelParams, Viscosity};
use chnst_core::scheme::{StarMode, StepConfig};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub step: StepConfig,
    pub final_time: f64,
    /// Mesh level `k`, `n = 2^k` cells per side.
    pub level: u32,
    pub preset: Preset,
    pub output: PathBuf,
    /// Snapshot every `stride` steps; 0 disables snapshots.
    pub stride: usize,
    /// Levels of the convergence table.
    pub levels: Vec<u32>,
    /// Number of steps of the `check` trajectory.
    pub check_steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ModelParams::default(),
            step: StepConfig::default(),
            final_time: 0.1,
            level: 4,
            preset: Preset::Convergence,
            output: PathBuf::from("output"),
            stride: 10,
            levels: vec![2, 3, 4, 5],
            check_steps: 10,
        }
    }
}

impl RunConfig {
    pub fn n(&self) -> usize {
        1 << self.level
    }
}

/// Keys accepted by [`parse_config`].
pub const KEYS: &[&str] = &[
    "gamma",
    "epsilon",
    "delta",
    "L11",
    "L12",
    "L22",
    "viscosity",
    "viscosity_base",
    "viscosity_slope",
    "c_split",
    "theta_min",
    "tau",
    "T",
    "newton_tol",
    "newton_max",
    "min_damping",
    "star_mode",
    "level",
    "preset",
    "output",
    "stride",
    "levels",
    "check_steps",
];

const MODEL_KEYS: &[&str] = &[
    "gamma",
    "epsilon",
    "delta",
    "L11",
    "L12",
    "L22",
    "viscosity",
    "viscosity_base",
    "viscosity_slope",
    "c_split",
    "theta_min",
];
const STEP_KEYS: &[&str] = &[
    "tau",
    "newton_tol",
    "newton_max",
    "min_damping",
    "star_mode",
];

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Line {
        line,
        message: format!("cannot parse '{value}' for '{key}'"),
    })
}

fn parse_levels(line: usize, value: &str) -> Result<Vec<u32>, ConfigError> {
    value
        .split(',')
        .map(|s| parse::<u32>(line, "levels", s.trim()))
        .collect()
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut viscosity_constant = None;
    let (mut base, mut slope) = match cfg.params.viscosity {
        Viscosity::PhaseQuadratic { base, slope } => (base, slope),
        Viscosity::Constant(v) => (v, 0.0),
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Line {
            line,
            message: format!("expected 'key = value', found '{content}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
            return Err(ConfigError::Line {
                line,
                message: format!("unknown key '{key}'"),
            });
        };
        if let Some(first) = seen.insert(known, line) {
            return Err(ConfigError::Line {
                line,
                message: format!("'{key}' already set on line {first}"),
            });
        }
        let p = &mut cfg.params;
        match known {
            "gamma" => p.gamma = parse(line, key, value)?,
            "epsilon" => p.epsilon = parse(line, key, value)?,
            "delta" => p.delta = parse(line, key, value)?,
            "L11" => p.l11 = parse(line, key, value)?,
            "L12" => p.l12 = parse(line, key, value)?,
            "L22" => p.l22 = parse(line, key, value)?,
            "viscosity" => viscosity_constant = Some(parse::<f64>(line, key, value)?),
            "viscosity_base" => base = parse(line, key, value)?,
            "viscosity_slope" => slope = parse(line, key, value)?,
            "c_split" => p.c_split = parse(line, key, value)?,
            "theta_min" => p.theta_min = parse(line, key, value)?,
            "tau" => cfg.step.tau = parse(line, key, value)?,
            "T" => cfg.final_time = parse(line, key, value)?,
            "newton_tol" => cfg.step.newton_tol = parse(line, key, value)?,
            "newton_max" => cfg.step.newton_max = parse(line, key, value)?,
            "min_damping" => cfg.step.min_damping = parse(line, key, value)?,
            "star_mode" => {
                cfg.step.star_mode = match value {
                    "explicit" => StarMode::Explicit,
                    "implicit" => StarMode::Implicit,
                    _ => {
                        return Err(ConfigError::Line {
                            line,
                            message: format!(
                                "star_mode must be 'explicit' or 'implicit', found '{value}'"
                            ),
                        })
                    }
                }
            }
            "level" => cfg.level = parse(line, key, value)?,
            "preset" => {
                cfg.preset = Preset::from_name(value).map_err(|e| ConfigError::Line {
                    line,
                    message: e.to_string(),
                })?
            }
            "output" => cfg.output = PathBuf::from(value),
            "stride" => cfg.stride = parse(line, key, value)?,
            "levels" => cfg.levels = parse_levels(line, value)?,
            "check_steps" => cfg.check_steps = parse(line, key, value)?,
            _ => unreachable!("every key in KEYS is handled"),
        }
    }
    if seen.contains_key("viscosity")
        && (seen.contains_key("viscosity_base") || seen.contains_key("viscosity_slope"))
    {
        return Err(ConfigError::Line {
            line: seen["viscosity"],
            message: "'viscosity' conflicts with 'viscosity_base'/'viscosity_slope'".into(),
        });
    }
    cfg.params.viscosity = match viscosity_constant {
        Some(v) => Viscosity::Constant(v),
        None => Viscosity::PhaseQuadratic { base, slope },
    };

    let last_of = |keys: &[&str]| keys.iter().filter_map(|k| seen.get(k).copied()).max();
    let at = |line: Option<usize>, message: String| match line {
        Some(line) => ConfigError::Line { line, message },
        None => ConfigError::Invalid(message),
    };
    cfg.params
        .validate()
        .map_err(|e| at(last_of(MODEL_KEYS), e.to_string()))?;
    cfg.step
        .validate()
        .map_err(|e| at(last_of(STEP_KEYS), e.to_string()))?;
    chnst_core::scheme::step_count(cfg.final_time, cfg.step.tau)
        .map_err(|e| at(last_of(&["T", "tau"]), e.to_string()))?;
    harness::validate_levels(&[cfg.level])
        .map_err(|e| at(seen.get("level").copied(), e.to_string()))?;
    harness::validate_levels(&cfg.levels)
        .map_err(|e| at(seen.get("levels").copied(), e.to_string()))?;
    if cfg.output.as_os_str().is_empty() {
        return Err(at(
            seen.get("output").copied(),
            "output directory must not be empty".into(),
        ));
    }
    Ok(cfg)
}
