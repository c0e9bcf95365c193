// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run configuration: TOML file, then command-line overrides.

use std::path::Path;

use anyhow::Context;
use drydown_core::evaluation::DEFAULT_WINDOW;
use drydown_core::pelt::PeltConfig;
use drydown_core::penalty::{
    DEFAULT_EXPERT_THRESHOLD, DEFAULT_GRID_POINTS, DEFAULT_HIGH_THRESHOLD, DEFAULT_LOW_THRESHOLD, DEFAULT_REGION_LEN,
};
use drydown_core::simulation::ScenarioSpec;
use drydown_core::timeseries::{parse_step, DEFAULT_MAX_GAP};
use drydown_core::Error;
use serde::{Deserialize, Serialize};

use crate::args::{InputArgs, PeltArgs};

pub const DEFAULT_CAP: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSettings {
    pub time_column: String,
    pub value_column: String,
    pub step: String,
    pub max_gap: usize,
    pub subsample: usize,
    pub cap: Option<f64>,
}

impl Default for InputSettings {
    fn default() -> Self {
        Self {
            time_column: "time".into(),
            value_column: "value".into(),
            step: "1h".into(),
            max_gap: DEFAULT_MAX_GAP,
            subsample: 1,
            cap: Some(DEFAULT_CAP),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecipSettings {
    pub time_column: String,
    pub value_column: String,
    pub step: Option<String>,
}

impl Default for PrecipSettings {
    fn default() -> Self {
        Self {
            time_column: "time".into(),
            value_column: "value".into(),
            step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub scenario: String,
    pub n: Option<usize>,
    pub replicates: u64,
    pub seed: u64,
    /// Full scenario description; replaces the built-in one named by `scenario`.
    pub spec: Option<ScenarioSpec>,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            scenario: "1a".into(),
            n: None,
            replicates: 1,
            seed: 0,
            spec: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub points: usize,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub region_len: usize,
    pub low_threshold: f64,
    pub high_threshold: f64,
    pub expert_threshold: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            points: DEFAULT_GRID_POINTS,
            lambda_min: None,
            lambda_max: None,
            region_len: DEFAULT_REGION_LEN,
            low_threshold: DEFAULT_LOW_THRESHOLD,
            high_threshold: DEFAULT_HIGH_THRESHOLD,
            expert_threshold: DEFAULT_EXPERT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    pub window: usize,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        Self { window: DEFAULT_WINDOW }
    }
}

/// Every parameter of a run. Sections a command does not use are ignored
/// by it but still validated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub jobs: Option<usize>,
    pub input: InputSettings,
    pub precip: PrecipSettings,
    pub pelt: PeltConfig,
    pub simulate: SimulateSettings,
    pub sweep: SweepSettings,
    pub evaluate: EvaluateSettings,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| Error::InvalidParameter(e.to_string()))
            .with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn apply_input(&mut self, a: &InputArgs) {
        let s = &mut self.input;
        set(&mut s.time_column, &a.time_column);
        set(&mut s.value_column, &a.value_column);
        set(&mut s.step, &a.step);
        set(&mut s.max_gap, &a.max_gap);
        set(&mut s.subsample, &a.subsample);
        if a.no_cap {
            s.cap = None;
        } else if a.cap.is_some() {
            s.cap = a.cap;
        }
    }

    pub fn apply_pelt(&mut self, a: &PeltArgs) {
        let p = &mut self.pelt;
        set(&mut p.penalty, &a.penalty);
        set(&mut p.min_seg_len, &a.min_seg_len);
        set(&mut p.min_jump, &a.min_jump);
        set(&mut p.fit.screen_starts, &a.screen_starts);
        if a.no_pruning {
            p.pruning = false;
        }
        if a.warm_start {
            p.warm_start = true;
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.pelt.validate()?;
        parse_step(&self.input.step)?;
        if let Some(step) = &self.precip.step {
            parse_step(step)?;
        }
        if self.input.subsample == 0 {
            return Err(Error::InvalidParameter("subsample must be at least 1".into()).into());
        }
        if let Some(cap) = self.input.cap {
            if !(cap > 0.0 && cap.is_finite()) {
                return Err(Error::InvalidParameter(format!("cap must be positive, got {cap}")).into());
            }
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidParameter("jobs must be at least 1".into()).into());
        }
        if self.sweep.points == 0 {
            return Err(Error::InvalidParameter("sweep needs at least one penalty".into()).into());
        }
        if self.evaluate.window == 0 {
            return Err(Error::InvalidParameter("window must be at least 1".into()).into());
        }
        if let Some(spec) = &self.simulate.spec {
            spec.validate()?;
        }
        Ok(())
    }
}

fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
    if let Some(v) = src {
        *dst = v.clone();
    }
}
