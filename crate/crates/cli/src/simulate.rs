// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use anyhow::Context;
use drydown_core::simulation::{default_spec, generate_replicate, GroundTruth, ScenarioSpec, TrueSegment};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::SimulateArgs;
use crate::config::RunConfig;
use crate::output::{write_csv, write_json, Manifest};
use crate::Log;

/// Seconds between simulated observations.
pub const SIM_STEP_SECONDS: i64 = 3600;

/// Sidecar describing one simulated replicate.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    /// Data CSV, relative to this file's directory.
    pub data_file: String,
    pub spec: ScenarioSpec,
    pub replicate: u64,
    pub n: usize,
    pub changepoints: Vec<usize>,
    pub large_changepoints: Vec<usize>,
    pub segments: Vec<TrueSegment>,
}

#[derive(Serialize, Deserialize)]
struct DataRow {
    t: i64,
    clean: f64,
    noisy: f64,
}

impl TruthFile {
    /// Reads a sidecar and the clean and noisy series it points to.
    pub fn load(path: &Path) -> anyhow::Result<GroundTruth> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: TruthFile = serde_json::from_str(&text)
            .map_err(|e| drydown_core::Error::InvalidParameter(e.to_string()))
            .with_context(|| format!("parsing {}", path.display()))?;
        let data = path.parent().unwrap_or(Path::new(".")).join(&file.data_file);
        let mut rdr = csv::Reader::from_path(&data).with_context(|| format!("opening {}", data.display()))?;
        let mut clean = Vec::with_capacity(file.n);
        let mut noisy = Vec::with_capacity(file.n);
        for rec in rdr.deserialize::<DataRow>() {
            let rec = rec.with_context(|| format!("reading {}", data.display()))?;
            clean.push(rec.clean);
            noisy.push(rec.noisy);
        }
        if clean.len() != file.n {
            return Err(drydown_core::Error::LengthMismatch {
                expected: file.n,
                actual: clean.len(),
            })
            .with_context(|| format!("{} does not match {}", data.display(), path.display()));
        }
        Ok(GroundTruth {
            scenario: file.spec.id.clone(),
            seed: file.spec.seed,
            replicate: file.replicate,
            changepoints: file.changepoints,
            segments: file.segments,
            clean,
            noisy,
        })
    }
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    spec: &'a ScenarioSpec,
    replicates: u64,
    files: Vec<PathBuf>,
}

pub fn resolve_spec(config: &RunConfig) -> anyhow::Result<ScenarioSpec> {
    let s = &config.simulate;
    let mut spec = match &s.spec {
        Some(spec) => spec.clone(),
        None => default_spec(&s.scenario)?,
    };
    if let Some(n) = s.n {
        spec = spec.with_n(n);
    }
    spec = spec.with_seed(s.seed);
    spec.validate()?;
    Ok(spec)
}

pub fn run(args: &SimulateArgs, config: &mut RunConfig, log: &Log) -> anyhow::Result<()> {
    let s = &mut config.simulate;
    if let Some(id) = &args.scenario {
        s.scenario = id.clone();
        s.spec = None;
    }
    if args.n.is_some() {
        s.n = args.n;
    }
    if let Some(r) = args.replicates {
        s.replicates = r;
    }
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    let spec = resolve_spec(config)?;
    let replicates = config.simulate.replicates;
    log.stage(format!(
        "simulating {replicates} replicates of scenario {} (n = {}, seed {})",
        spec.id, spec.n, spec.seed
    ));
    let out = &args.out_dir;
    let files = (0..replicates)
        .into_par_iter()
        .map(|r| write_replicate(&spec, r, out))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let summary = SimulateSummary {
        spec: &spec,
        replicates,
        files,
    };
    Manifest::new("simulate", config, Vec::new(), summary).write(out)
}

fn write_replicate(spec: &ScenarioSpec, replicate: u64, out: &Path) -> anyhow::Result<PathBuf> {
    let truth = generate_replicate(spec, replicate)?;
    let stem = format!("{}_s{}_r{:03}", spec.id, spec.seed, replicate);
    let data_file = format!("{stem}.csv");
    write_csv(
        &out.join(&data_file),
        truth.noisy.iter().zip(&truth.clean).enumerate().map(|(i, (&v, &c))| DataRow {
            t: i as i64 * SIM_STEP_SECONDS,
            clean: c,
            noisy: v,
        }),
    )?;
    let sidecar = out.join(format!("{stem}.truth.json"));
    write_json(
        &sidecar,
        &TruthFile {
            data_file,
            spec: spec.clone(),
            replicate,
            n: truth.n(),
            changepoints: truth.changepoints.clone(),
            large_changepoints: truth.large_changepoints(),
            segments: truth.segments.clone(),
        },
    )?;
    Ok(sidecar)
}
