//! Experiment configuration: a flat JSON file whose keys mirror the flags.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distributions::Model;

/// Every key of the config file. All optional; command-line flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub model: Option<Model>,
    pub w: Option<f64>,
    pub n: Option<usize>,
    pub steps: Option<u64>,
    pub snapshot_every: Option<u64>,
    pub seed: Option<u64>,
    pub x_max: Option<f64>,
    pub cells: Option<usize>,
    pub alpha: Option<f64>,
    pub s_min: Option<f64>,
    pub s_max: Option<f64>,
    pub s_points: Option<usize>,
    pub tolerance: Option<f64>,
    pub init: Option<String>,
    pub x_lo: Option<f64>,
    pub x_hi: Option<f64>,
    pub points: Option<usize>,
    pub pairs: Option<usize>,
    pub measures: Option<usize>,
    pub calibrate: Option<bool>,
    pub repeat: Option<u32>,
    pub sequential: Option<bool>,
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl ConfigLayer {
    /// Reads a flat config file, or the `config` object of a run manifest.
    /// Errors carry the file name, line and column.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("{}: {e}", path.display())))?;
        let located = |e: serde_json::Error| {
            ConfigError::new(format!(
                "{}:{}:{}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        };
        let value: serde_json::Value = serde_json::from_str(&text).map_err(located)?;
        let is_manifest = value.get("command").is_some() && value.get("config").is_some();
        if is_manifest {
            #[derive(Deserialize)]
            struct Manifest {
                config: ConfigLayer,
            }
            Ok(serde_json::from_str::<Manifest>(&text)
                .map_err(located)?
                .config)
        } else {
            serde_json::from_str(&text).map_err(located)
        }
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &ConfigLayer) -> Self {
        overlay!(self, top; model, w, n, steps, snapshot_every, seed, x_max, cells, alpha,
            s_min, s_max, s_points, tolerance, init, x_lo, x_hi, points, pairs, measures,
            calibrate, repeat, sequential, out);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Iterate,
    Equilibrium,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Iterate => "iterate",
            Command::Equilibrium => "equilibrium",
            Command::Verify => "verify",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Effective configuration after defaults, file and flags are merged.
///
/// Serializes to the same flat keys the config file accepts, so the copy in
/// a run manifest can be passed back with `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Model,
    pub w: f64,
    pub n: usize,
    pub steps: u64,
    pub snapshot_every: u64,
    pub seed: u64,
    pub x_max: f64,
    pub cells: usize,
    pub alpha: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub s_points: usize,
    pub tolerance: f64,
    pub init: String,
    pub x_lo: f64,
    pub x_hi: f64,
    pub points: usize,
    pub pairs: usize,
    pub measures: usize,
    pub calibrate: bool,
    pub repeat: u32,
    pub sequential: bool,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn defaults(command: Command) -> Self {
        let (steps, init) = match command {
            Command::Iterate => (200, "uniform"),
            Command::Verify => (60, "uniform"),
            _ => (100, "equal"),
        };
        Self {
            model: Model::Drm,
            w: 1.0,
            n: 200_000,
            steps,
            snapshot_every: 1,
            seed: 42,
            x_max: 40.0,
            cells: 16384,
            alpha: 1.5,
            s_min: 1e-4,
            s_max: 1e4,
            s_points: 400,
            tolerance: 1e-3,
            init: init.to_string(),
            x_lo: 0.01,
            x_hi: 8.0,
            points: 800,
            pairs: 20,
            measures: 50,
            calibrate: false,
            repeat: 1,
            sequential: false,
            out: PathBuf::from("out"),
        }
    }

    /// Defaults, then the file layer, then the flag layer; validated for `command`.
    ///
    /// An unset `x_max` scales with `w` (40 w).
    pub fn resolve(command: Command, layer: &ConfigLayer) -> Result<Self, ConfigError> {
        let mut c = Self::defaults(command);
        let l = layer.clone();
        if let Some(v) = l.model {
            c.model = v;
        }
        if let Some(v) = l.w {
            c.w = v;
        }
        c.x_max = 40.0 * c.w;
        if let Some(v) = l.n {
            c.n = v;
        }
        if let Some(v) = l.steps {
            c.steps = v;
        }
        if let Some(v) = l.snapshot_every {
            c.snapshot_every = v;
        }
        if let Some(v) = l.seed {
            c.seed = v;
        }
        if let Some(v) = l.x_max {
            c.x_max = v;
        }
        if let Some(v) = l.cells {
            c.cells = v;
        }
        if let Some(v) = l.alpha {
            c.alpha = v;
        }
        if let Some(v) = l.s_min {
            c.s_min = v;
        }
        if let Some(v) = l.s_max {
            c.s_max = v;
        }
        if let Some(v) = l.s_points {
            c.s_points = v;
        }
        if let Some(v) = l.tolerance {
            c.tolerance = v;
        }
        if let Some(v) = l.init {
            c.init = v.to_ascii_lowercase();
        }
        if let Some(v) = l.x_lo {
            c.x_lo = v;
        }
        if let Some(v) = l.x_hi {
            c.x_hi = v;
        }
        if let Some(v) = l.points {
            c.points = v;
        }
        if let Some(v) = l.pairs {
            c.pairs = v;
        }
        if let Some(v) = l.measures {
            c.measures = v;
        }
        if let Some(v) = l.calibrate {
            c.calibrate = v;
        }
        if let Some(v) = l.repeat {
            c.repeat = v;
        }
        if let Some(v) = l.sequential {
            c.sequential = v;
        }
        if let Some(v) = l.out {
            c.out = v;
        }
        c.validate(command)?;
        Ok(c)
    }

    pub fn validate(&self, command: Command) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: String| Err(ConfigError::new(format!("{key}: {msg}")));
        if !(self.w > 0.0 && self.w.is_finite()) {
            return bad(
                "w",
                format!("mean wealth must be positive and finite, got {}", self.w),
            );
        }
        if !(self.x_max > 0.0 && self.x_max.is_finite()) {
            return bad(
                "x_max",
                format!("must be positive and finite, got {}", self.x_max),
            );
        }
        if self.cells < 2 {
            return bad(
                "cells",
                format!("need at least 2 cells, got {}", self.cells),
            );
        }
        if !(self.s_min > 0.0 && self.s_max > self.s_min && self.s_max.is_finite()) {
            return bad(
                "s_min/s_max",
                format!(
                    "need 0 < s_min < s_max, got [{}, {}]",
                    self.s_min, self.s_max
                ),
            );
        }
        if self.s_points < 3 {
            return bad(
                "s_points",
                format!("need at least 3 points, got {}", self.s_points),
            );
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return bad("tolerance", format!("must be >= 0, got {}", self.tolerance));
        }
        if self.repeat == 0 {
            return bad("repeat", "must be at least 1".into());
        }
        if self.repeat > 1 && command != Command::Simulate {
            return bad(
                "repeat",
                format!("only simulate repeats over seeds, not {command}"),
            );
        }
        match command {
            Command::Simulate => {
                if self.n == 0 || self.n % 2 == 1 {
                    return bad(
                        "n",
                        format!("population size {} is odd or zero: N must be even", self.n),
                    );
                }
                if self.snapshot_every == 0 {
                    return bad("snapshot_every", "must be at least 1".into());
                }
                if !matches!(self.init.as_str(), "equal" | "uniform" | "exponential") {
                    return bad(
                        "init",
                        format!(
                            "simulate starts from equal, uniform or exponential, got {:?}",
                            self.init
                        ),
                    );
                }
            }
            Command::Iterate => {
                if !(1.0..=2.0).contains(&self.alpha) {
                    return bad(
                        "alpha",
                        format!("iterate accepts 1 <= alpha <= 2, got {}", self.alpha),
                    );
                }
                if !matches!(
                    self.init.as_str(),
                    "equal" | "uniform" | "exponential" | "equilibrium"
                ) {
                    return bad("init", format!("iterate starts from equal, uniform, exponential or equilibrium, got {:?}", self.init));
                }
                if self.init == "uniform" && 2.0 * self.w > self.x_max {
                    return bad(
                        "x_max",
                        format!("uniform start on [0, {}] exceeds the grid", 2.0 * self.w),
                    );
                }
            }
            Command::Equilibrium => {
                if !(self.x_lo > 0.0 && self.x_hi > self.x_lo && self.x_hi.is_finite()) {
                    return bad(
                        "x_lo/x_hi",
                        format!("need 0 < x_lo < x_hi, got [{}, {}]", self.x_lo, self.x_hi),
                    );
                }
                if self.points < 2 {
                    return bad(
                        "points",
                        format!("need at least 2 points, got {}", self.points),
                    );
                }
            }
            Command::Verify => {
                if !(self.alpha > 1.0 && self.alpha < 2.0) {
                    return bad(
                        "alpha",
                        format!(
                            "verify asserts contraction, which needs 1 < alpha < 2; got {}",
                            self.alpha
                        ),
                    );
                }
                if self.n == 0 || self.n % 2 == 1 {
                    return bad(
                        "n",
                        format!("population size {} is odd or zero: N must be even", self.n),
                    );
                }
                if self.n < 1000 {
                    return bad(
                        "n",
                        format!(
                            "the micro-macro check needs at least 1000 agents, got {}",
                            self.n
                        ),
                    );
                }
                if self.x_max < 20.0 * self.w {
                    return bad(
                        "x_max",
                        format!("verify needs x_max >= 20 w, got {}", self.x_max),
                    );
                }
            }
        }
        Ok(())
    }
}
