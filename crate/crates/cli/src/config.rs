//! Experiment configuration (TOML).
//!
//! Anything that changes results without being a numerical tuning knob —
//! seed, spreads, model, grid, path count, retirement schedule, payoff
//! boundary data — must be stated; there is no silent default for it.

use std::path::{Path, PathBuf};

use cpslab::cps::CpsOptions;
use cpslab::paths::{Model, TimeGrid};
use cpslab::skeleton::{LadderMode, LadderOptions};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub n_paths: usize,
    /// Output directory, relative to the config file.
    pub out: Option<PathBuf>,
    /// Keep `paths.csv` in a full run (the `simulate` stage always writes it).
    #[serde(default)]
    pub write_paths: bool,
    /// Thread count; never affects results. 0 = all cores.
    #[serde(default)]
    pub workers: usize,
    pub model: Model,
    pub grid: GridSpec,
    pub ladder: LadderSpec,
    pub cps: Option<CpsSpec>,
    pub facelift: Option<FaceliftSpec>,
    #[serde(default)]
    pub audit: AuditSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub horizon: f64,
    pub steps: usize,
    pub uniform: bool,
    /// Explicit times when `uniform = false`.
    pub times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsSpec {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSpec {
    pub eps: EpsSpec,
    #[serde(default = "multiplicative")]
    pub mode: LadderMode,
    #[serde(default = "yes")]
    pub snap: bool,
}

fn multiplicative() -> LadderMode {
    LadderMode::Multiplicative
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant { alpha: f64 },
    /// Keeps `E_Q[sup f(X)]` finite for `f(x) = x^power`.
    Integrability { power: f64, default_alpha: f64 },
    /// Terminal law on `{u, v}`; ladders are re-extracted at the fitted spread.
    TwoPoint { u: f64, v: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpsSpec {
    /// Required for single-asset models, ignored otherwise.
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub options: CpsOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceliftSpec {
    /// Payoff file, relative to the config file.
    pub payoff: PathBuf,
    pub delta: Option<f64>,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub direct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSpec {
    pub n_stops: usize,
    pub min_count: usize,
    pub min_bucket: usize,
    pub tube: Option<TubeSpec>,
}

impl Default for AuditSpec {
    fn default() -> Self {
        Self {
            n_stops: 3,
            min_count: 50,
            min_bucket: 50,
            tube: None,
        }
    }
}

/// Tube around the conditional median continuation of one simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeSpec {
    pub path: usize,
    /// Grid index of the history cut.
    pub split: usize,
    pub eta: f64,
    #[serde(default = "yes")]
    pub log_metric: bool,
    pub samples: usize,
}

/// A parsed config together with where it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub base: PathBuf,
    pub sha256: String,
}

fn invalid<T>(field: &str, msg: impl std::fmt::Display) -> Result<T, CliError> {
    Err(CliError::Config(format!("{field}: {msg}")))
}

impl ExperimentConfig {
    pub fn eps_seq(&self) -> Vec<f64> {
        match &self.ladder.eps {
            EpsSpec::One(e) => vec![*e],
            EpsSpec::Many(v) => v.clone(),
        }
    }

    pub fn ladder_options(&self) -> LadderOptions {
        LadderOptions {
            mode: self.ladder.mode,
            snap: self.ladder.snap,
            ..LadderOptions::default()
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        let g = &self.grid;
        let grid = if g.uniform {
            if g.times.is_some() {
                return invalid("grid.times", "only allowed with uniform = false");
            }
            TimeGrid::uniform(g.horizon, g.steps)
        } else {
            let Some(times) = &g.times else {
                return invalid("grid.times", "required when uniform = false");
            };
            if times.len() != g.steps + 1 || times.last() != Some(&g.horizon) {
                return invalid("grid.times", "must have steps + 1 entries ending at horizon");
            }
            TimeGrid::new(times.clone())
        };
        grid.map_err(|e| CliError::Config(format!("grid: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n_paths == 0 {
            return invalid("n_paths", "must be positive");
        }
        self.time_grid()?;
        let eps = self.eps_seq();
        if eps.is_empty() {
            return invalid("ladder.eps", "must not be empty");
        }
        if eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return invalid("ladder.eps", "every spread must be positive");
        }
        if self.ladder.mode == LadderMode::Multiplicative && eps.iter().any(|e| *e >= 1.0) {
            return invalid("ladder.eps", "spreads must lie in (0, 1)");
        }
        if eps.windows(2).any(|w| !(w[0] > w[1])) {
            return invalid("ladder.eps", "sequence must be strictly decreasing");
        }
        let d = self.model.dim();
        if let Some(c) = &self.cps {
            if d == 1 && c.schedule.is_none() {
                return invalid("cps.schedule", "required for single-asset models");
            }
            if !(self.ladder.snap && self.ladder.mode == LadderMode::Multiplicative) {
                return invalid("ladder", "price systems need snapped multiplicative ladders");
            }
            match c.schedule {
                Some(ScheduleSpec::Constant { alpha }) if !(0.0..=1.0).contains(&alpha) => {
                    return invalid("cps.schedule.alpha", "must lie in [0, 1]");
                }
                Some(ScheduleSpec::Integrability { default_alpha, .. }) if !(default_alpha > 0.0 && default_alpha < 1.0) => {
                    return invalid("cps.schedule.default_alpha", "must lie in (0, 1)");
                }
                _ => {}
            }
        }
        if self.facelift.is_some() && d != 1 {
            return invalid("facelift", "face-lifting is defined for one asset");
        }
        if let Some(t) = &self.audit.tube {
            if t.path >= self.n_paths {
                return invalid("audit.tube.path", "out of range");
            }
            if t.split + 1 >= self.time_grid()?.len() {
                return invalid("audit.tube.split", "must be before the horizon");
            }
            if !(t.eta > 0.0) || t.samples == 0 {
                return invalid("audit.tube", "needs eta > 0 and samples > 0");
            }
        }
        Ok(())
    }
}

/// Reads and validates a config; `seed` and `out` override the file.
pub fn load(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<Loaded, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Config("config is not UTF-8".into()))?;
    let config: ExperimentConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let Some(seed) = seed.or(config.seed) else {
        return invalid("seed", "missing (set it in the config or pass --seed)");
    };
    let out = match (out, &config.out) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => base.join(o),
        (None, None) => return invalid("out", "missing (set it in the config or pass --out)"),
    };
    if let Some(f) = &config.facelift {
        let p = base.join(&f.payoff);
        if !p.is_file() {
            return invalid("facelift.payoff", format!("file {} does not exist", p.display()));
        }
    }
    Ok(Loaded {
        config,
        seed,
        out,
        base,
        sha256: crate::sha256_hex(&bytes),
    })
}
