// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use anyhow::Context;
use drydown_core::decay_model::DecayParams;
use drydown_core::evaluation::{changepoint_distance, match_rates, rmse};
use drydown_core::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::EvaluateArgs;
use crate::config::RunConfig;
use crate::output::{write_csv, InputDigest, Manifest};
use crate::simulate::TruthFile;
use crate::Log;

#[derive(Deserialize)]
struct ChangepointRecord {
    index: usize,
}

#[derive(Deserialize)]
struct SegmentRecord {
    start: usize,
    end: usize,
    alpha0: f64,
    alpha1: f64,
    gamma: f64,
}

/// Changepoints and the fitted and γ tracks read back from a detect output directory.
struct Detected {
    changepoints: Vec<usize>,
    fitted: Vec<f64>,
    gamma: Vec<f64>,
}

fn read_detected(dir: &Path) -> anyhow::Result<Detected> {
    let read = |name: &str| -> anyhow::Result<csv::Reader<std::fs::File>> {
        let p = dir.join(name);
        csv::Reader::from_path(&p).with_context(|| format!("opening {}", p.display()))
    };
    let changepoints = read("changepoints.csv")?
        .deserialize::<ChangepointRecord>()
        .map(|r| r.map(|r| r.index))
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("reading changepoints in {}", dir.display()))?;
    let segments = read("segments.csv")?
        .deserialize::<SegmentRecord>()
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("reading segments in {}", dir.display()))?;
    let mut fitted = Vec::new();
    let mut gamma = Vec::new();
    for s in &segments {
        if s.start != fitted.len() || s.end <= s.start {
            return Err(Error::InvalidParameter(format!(
                "segments in {} do not tile the series at {}..{}",
                dir.display(),
                s.start,
                s.end
            ))
            .into());
        }
        let p = DecayParams::new(s.alpha0, s.alpha1, s.gamma);
        fitted.extend((1..=s.end - s.start).map(|u| p.value_at(u as f64)));
        gamma.extend(std::iter::repeat(s.gamma).take(s.end - s.start));
    }
    Ok(Detected {
        changepoints,
        fitted,
        gamma,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub truth: PathBuf,
    pub detected: PathBuf,
    pub n: usize,
    pub true_count: usize,
    pub detected_count: usize,
    pub tp_exact: f64,
    pub fp_exact: f64,
    pub tp_window: f64,
    pub fp_window: f64,
    pub tp_window_large: f64,
    pub distance: f64,
    pub rmse_fit: f64,
    pub rmse_gamma: f64,
}

#[derive(Serialize)]
struct AggregateRow {
    metric: &'static str,
    mean: f64,
    median: f64,
    min: f64,
    max: f64,
}

fn evaluate_pair(truth_path: &Path, dir: &Path, window: usize) -> anyhow::Result<EvalRow> {
    let truth = TruthFile::load(truth_path)?;
    let det = read_detected(dir)?;
    let n = truth.n();
    if det.fitted.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: det.fitted.len(),
        })
        .with_context(|| format!("{} does not cover {}", dir.display(), truth_path.display()));
    }
    let rates = match_rates(&truth.changepoints, &det.changepoints, window, n);
    let large = match_rates(&truth.large_changepoints(), &det.changepoints, window, n);
    Ok(EvalRow {
        truth: truth_path.to_path_buf(),
        detected: dir.to_path_buf(),
        n,
        true_count: truth.changepoints.len(),
        detected_count: det.changepoints.len(),
        tp_exact: rates.tp_exact,
        fp_exact: rates.fp_exact,
        tp_window: rates.tp_window,
        fp_window: rates.fp_window,
        tp_window_large: large.tp_window,
        distance: changepoint_distance(&truth.changepoints, &det.changepoints, n).distance,
        rmse_fit: rmse(&truth.clean, &det.fitted)?,
        rmse_gamma: rmse(&truth.gamma_track(), &det.gamma)?,
    })
}

fn aggregate(metric: &'static str, values: impl Iterator<Item = f64>) -> AggregateRow {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    let median = if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    };
    AggregateRow {
        metric,
        mean: v.iter().sum::<f64>() / k as f64,
        median,
        min: v.first().copied().unwrap_or(f64::NAN),
        max: v.last().copied().unwrap_or(f64::NAN),
    }
}

pub fn run(args: &EvaluateArgs, config: &mut RunConfig, log: &Log) -> anyhow::Result<()> {
    if let Some(w) = args.window {
        config.evaluate.window = w;
    }
    config.validate()?;
    if args.truth.len() != args.detected.len() {
        return Err(Error::InvalidParameter(format!(
            "{} truth files but {} detected directories",
            args.truth.len(),
            args.detected.len()
        ))
        .into());
    }
    let window = config.evaluate.window;
    log.stage(format!("evaluating {} runs (window {window})", args.truth.len()));
    let rows = args
        .truth
        .par_iter()
        .zip(&args.detected)
        .map(|(t, d)| evaluate_pair(t, d, window))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let out = &args.out_dir;
    write_csv(&out.join("evaluation.csv"), &rows)?;
    let metrics: [(&'static str, fn(&EvalRow) -> f64); 8] = [
        ("tp_exact", |r| r.tp_exact),
        ("fp_exact", |r| r.fp_exact),
        ("tp_window", |r| r.tp_window),
        ("fp_window", |r| r.fp_window),
        ("tp_window_large", |r| r.tp_window_large),
        ("distance", |r| r.distance),
        ("rmse_fit", |r| r.rmse_fit),
        ("rmse_gamma", |r| r.rmse_gamma),
    ];
    let summary: Vec<AggregateRow> = metrics
        .iter()
        .map(|(name, f)| aggregate(name, rows.iter().map(f)))
        .collect();
    write_csv(&out.join("summary.csv"), &summary)?;
    let inputs = args.truth.iter().map(|p| InputDigest::of(p)).collect::<anyhow::Result<Vec<_>>>()?;
    Manifest::new("evaluate", config, inputs, serde_json::json!({ "runs": rows.len() })).write(out)
}
