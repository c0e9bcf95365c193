// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use anyhow::Context;
use drydown_core::decay_model::efolding_steps;
use drydown_core::pelt::{detect_with, Segmentation};
use drydown_core::segment_cost::CostCache;
use drydown_core::timeseries::{ingest_csv, parse_step, ColumnMap, SoilSeries};
use drydown_core::decay_model::Covariate;
use rayon::prelude::*;
use serde::Serialize;

use crate::args::DetectArgs;
use crate::config::{InputSettings, RunConfig};
use crate::output::{write_csv, InputDigest, Manifest};
use crate::Log;

/// A series after ingestion, gap filling, subsampling and capping.
pub struct Prepared {
    pub series: SoilSeries,
    pub interpolated: usize,
    pub capped: usize,
}

pub fn prepare(path: &Path, s: &InputSettings) -> anyhow::Result<Prepared> {
    let step = parse_step(&s.step)?;
    let raw = ingest_csv(path, &ColumnMap::new(&s.time_column, &s.value_column), step)?;
    let filled = raw
        .interpolate_gaps(s.max_gap)
        .with_context(|| format!("filling gaps in {}", path.display()))?;
    let series = filled.subsample(s.subsample)?;
    let interpolated = series.interpolated_mask().iter().filter(|&&m| m).count();
    let (series, capped) = match s.cap {
        Some(cap) => series.cap_values(cap)?,
        None => (series, 0),
    };
    Ok(Prepared {
        series,
        interpolated,
        capped,
    })
}

#[derive(Serialize)]
struct ChangepointRow {
    index: usize,
    timestamp: String,
}

#[derive(Serialize)]
struct SegmentRow {
    start: usize,
    end: usize,
    alpha0: f64,
    alpha1: f64,
    gamma: f64,
    se_alpha0: f64,
    se_alpha1: f64,
    se_gamma: f64,
    efolding_days: f64,
    converged: bool,
}

#[derive(Serialize)]
struct FittedRow {
    t: String,
    observed: f64,
    fitted: f64,
}

#[derive(Serialize)]
struct DetectSummary {
    n: usize,
    step_seconds: i64,
    penalty: f64,
    changepoints: usize,
    total_cost: f64,
    all_converged: bool,
    interpolated_points: usize,
    capped_points: usize,
    segment_fits: usize,
}

/// Writes `changepoints.csv`, `segments.csv`, `fitted.csv` and `manifest.json` to `dir`.
pub fn write_outputs(
    dir: &Path,
    prepared: &Prepared,
    seg: &Segmentation,
    config: &RunConfig,
    inputs: Vec<InputDigest>,
    fits: usize,
) -> anyhow::Result<()> {
    let series = &prepared.series;
    let step_days = series.step().num_milliseconds() as f64 / 86_400_000.0;
    write_csv(
        &dir.join("changepoints.csv"),
        seg.changepoints.iter().map(|&i| ChangepointRow {
            index: i,
            timestamp: series.timestamp(i).to_rfc3339(),
        }),
    )?;
    write_csv(
        &dir.join("segments.csv"),
        seg.segments.iter().map(|s| {
            let p = s.fit.params;
            let se = &s.fit.std_errors;
            SegmentRow {
                start: s.start,
                end: s.end,
                alpha0: p.alpha0,
                alpha1: p.alpha1,
                gamma: p.gamma,
                se_alpha0: se.alpha0,
                se_alpha1: se.alpha1,
                se_gamma: se.gamma,
                efolding_days: efolding_steps(p.gamma) * step_days,
                converged: s.fit.converged,
            }
        }),
    )?;
    let fitted = seg.fitted_values();
    write_csv(
        &dir.join("fitted.csv"),
        series.values().iter().zip(&fitted).enumerate().map(|(i, (&o, &f))| FittedRow {
            t: series.timestamp(i).to_rfc3339(),
            observed: o,
            fitted: f,
        }),
    )?;

    let summary = DetectSummary {
        n: series.len(),
        step_seconds: series.step().num_seconds(),
        penalty: seg.penalty,
        changepoints: seg.len(),
        total_cost: seg.total_cost,
        all_converged: seg.all_converged(),
        interpolated_points: prepared.interpolated,
        capped_points: prepared.capped,
        segment_fits: fits,
    };
    let mut manifest = Manifest::new("detect", config, inputs, summary);
    manifest.warnings.extend(seg.jump_warnings().iter().map(ToString::to_string));
    for (i, s) in seg.segments.iter().enumerate() {
        if !s.fit.converged {
            manifest
                .warnings
                .push(format!("segment {i} ({}..{}) did not converge", s.start, s.end));
        }
    }
    if prepared.capped > 0 {
        manifest
            .warnings
            .push(format!("{} values were capped", prepared.capped));
    }
    manifest.write(dir)
}

fn detect_one(input: &Path, dir: &Path, config: &RunConfig, log: &Log) -> anyhow::Result<()> {
    log.stage(format!("reading {}", input.display()));
    let digest = InputDigest::of(input)?;
    let prepared = prepare(input, &config.input)?;
    log.stage(format!(
        "detecting on {} points (penalty {})",
        prepared.series.len(),
        config.pelt.penalty
    ));
    let cache = CostCache::new(config.pelt.cache_capacity);
    let seg = detect_with(&prepared.series, &Covariate::None, &config.pelt, &cache)
        .with_context(|| format!("detecting changepoints in {}", input.display()))?;
    log.stage(format!("{} changepoints; writing {}", seg.len(), dir.display()));
    write_outputs(dir, &prepared, &seg, config, vec![digest], cache.fit_count())
}

pub fn run(args: &DetectArgs, config: &RunConfig, log: &Log) -> anyhow::Result<()> {
    if args.input.len() == 1 {
        return detect_one(&args.input[0], &args.out_dir, config, log);
    }
    let dirs: Vec<PathBuf> = args
        .input
        .iter()
        .map(|p| args.out_dir.join(p.file_stem().unwrap_or(p.as_os_str())))
        .collect();
    let mut seen = std::collections::HashSet::new();
    for d in &dirs {
        if !seen.insert(d) {
            return Err(drydown_core::Error::InvalidParameter(format!(
                "two inputs map to the same output directory {}",
                d.display()
            ))
            .into());
        }
    }
    args.input
        .par_iter()
        .zip(&dirs)
        .try_for_each(|(input, dir)| detect_one(input, dir, config, log))
}
