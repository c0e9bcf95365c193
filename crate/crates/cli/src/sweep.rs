// SPDX-License-Identifier: MIT OR Apache-2.0

use anyhow::Context;
use drydown_core::decay_model::Covariate;
use drydown_core::pelt::bic_penalty;
use drydown_core::penalty::{annotations_from_precip, expert_changepoints, log_grid, sweep_with};
use drydown_core::segment_cost::CostCache;
use drydown_core::timeseries::{ingest_precip_csv, parse_step, ColumnMap, PrecipSeries, SoilSeries};
use drydown_core::Error;
use serde::Serialize;

use crate::args::SweepArgs;
use crate::config::RunConfig;
use crate::detect::prepare;
use crate::output::{write_csv, InputDigest, Manifest};
use crate::Log;

#[derive(Serialize)]
struct SweepRow {
    lambda: f64,
    n_changepoints: usize,
    total_cost: f64,
    annotation_loss: usize,
    excess_risk: f64,
}

#[derive(Serialize)]
struct ChangepointRow {
    lambda: f64,
    index: usize,
}

#[derive(Serialize)]
struct SweepSummary {
    n: usize,
    annotated_regions: usize,
    expert_changepoints: Vec<usize>,
    monotone: bool,
    annotation_argmin: Vec<f64>,
    excess_risk_argmin: Vec<f64>,
}

fn apply(args: &SweepArgs, config: &mut RunConfig) {
    let p = &mut config.precip;
    if let Some(v) = &args.precip_time_column {
        p.time_column = v.clone();
    }
    if let Some(v) = &args.precip_value_column {
        p.value_column = v.clone();
    }
    if args.precip_step.is_some() {
        p.step = args.precip_step.clone();
    }
    let s = &mut config.sweep;
    if let Some(v) = args.points {
        s.points = v;
    }
    if args.lambda_min.is_some() {
        s.lambda_min = args.lambda_min;
    }
    if args.lambda_max.is_some() {
        s.lambda_max = args.lambda_max;
    }
    if let Some(v) = args.region_len {
        s.region_len = v;
    }
    if let Some(v) = args.low_threshold {
        s.low_threshold = v;
    }
    if let Some(v) = args.high_threshold {
        s.high_threshold = v;
    }
    if let Some(v) = args.expert_threshold {
        s.expert_threshold = v;
    }
}

/// Brings precipitation onto the soil grid, summing finer records.
fn precip_on_grid(precip: PrecipSeries, soil: &SoilSeries) -> anyhow::Result<PrecipSeries> {
    let (p, s) = (precip.step().num_milliseconds(), soil.step().num_milliseconds());
    if s % p != 0 {
        return Err(Error::InvalidParameter(format!(
            "soil step {}s is not a multiple of the precipitation step {}s",
            s / 1000,
            p / 1000
        ))
        .into());
    }
    let summed = precip.accumulate((s / p) as usize)?;
    Ok(summed.align_to(soil)?)
}

pub fn run(args: &SweepArgs, config: &mut RunConfig, log: &Log) -> anyhow::Result<()> {
    apply(args, config);
    config.validate()?;
    let inputs = vec![InputDigest::of(&args.input)?, InputDigest::of(&args.precip)?];
    log.stage(format!("reading {}", args.input.display()));
    let prepared = prepare(&args.input, &config.input)?;
    let series = &prepared.series;
    let n = series.len();

    let p = &config.precip;
    let step = parse_step(p.step.as_deref().unwrap_or(&config.input.step))?;
    log.stage(format!("reading {}", args.precip.display()));
    let precip = ingest_precip_csv(&args.precip, &ColumnMap::new(&p.time_column, &p.value_column), step)?;
    let precip = precip_on_grid(precip, series).with_context(|| format!("aligning {}", args.precip.display()))?;

    let s = &config.sweep;
    let annotations = annotations_from_precip(&precip, s.region_len, s.low_threshold, s.high_threshold)?;
    let expert = expert_changepoints(&precip, s.expert_threshold, config.pelt.min_seg_len, n);
    let bic = bic_penalty(n);
    let lambdas = log_grid(
        s.lambda_min.unwrap_or(0.1 * bic),
        s.lambda_max.unwrap_or(10.0 * bic),
        s.points,
    )?;
    log.stage(format!(
        "sweeping {} penalties over {n} points ({} annotated regions, {} expert changepoints)",
        lambdas.len(),
        annotations.len(),
        expert.len()
    ));
    let cache = CostCache::new(config.pelt.cache_capacity);
    let result = sweep_with(
        series,
        &Covariate::None,
        &lambdas,
        &config.pelt,
        Some(&annotations),
        Some(&expert),
        &cache,
    )
    .with_context(|| format!("sweeping penalties on {}", args.input.display()))?;

    let losses = result.annotation_losses.clone().unwrap_or_default();
    let risks = result.excess_risks.clone().unwrap_or_default();
    let out = &args.out_dir;
    write_csv(
        &out.join("sweep.csv"),
        (0..result.lambdas.len()).map(|i| SweepRow {
            lambda: result.lambdas[i],
            n_changepoints: result.counts[i],
            total_cost: result.total_costs[i],
            annotation_loss: losses[i],
            excess_risk: risks[i],
        }),
    )?;
    write_csv(
        &out.join("sweep_changepoints.csv"),
        result
            .lambdas
            .iter()
            .zip(&result.changepoints)
            .flat_map(|(&lambda, cps)| cps.iter().map(move |&index| ChangepointRow { lambda, index })),
    )?;
    let summary = SweepSummary {
        n,
        annotated_regions: annotations.len(),
        expert_changepoints: expert,
        monotone: result.monotone,
        annotation_argmin: result.annotation_argmin(),
        excess_risk_argmin: result.excess_risk_argmin(),
    };
    let mut manifest = Manifest::new("sweep", config, inputs, summary);
    if !result.monotone {
        manifest
            .warnings
            .push("changepoint counts are not non-increasing in the penalty".into());
    }
    if annotations.is_empty() {
        manifest
            .warnings
            .push("no annotated region: every region has missing precipitation".into());
    }
    log.stage(format!("writing {}", out.display()));
    manifest.write(out)
}
