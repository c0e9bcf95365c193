// SPDX-License-Identifier: MIT OR Apache-2.0

//! Penalty selection from precipitation.
//!
//! Two losses are evaluated over a grid of penalties. The annotation loss
//! counts regions whose number of detected changepoints falls outside an
//! allowed range derived from rainfall counts. The excess penalized risk is
//! the penalized cost of the segmentation implied by rainfall instants minus
//! the optimal penalized cost.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decay_model::Covariate;
use crate::error::{Error, Result};
use crate::pelt::{bic_penalty, detect_with, refit_with, PeltConfig, Penalty, Segmentation};
use crate::segment_cost::CostCache;
use crate::timeseries::{PrecipSeries, SoilSeries};

/// Ten days of hourly steps.
pub const DEFAULT_REGION_LEN: usize = 240;
pub const DEFAULT_LOW_THRESHOLD: f64 = 0.5;
pub const DEFAULT_HIGH_THRESHOLD: f64 = 1.0;
/// Rainfall above this depth marks an expert changepoint.
pub const DEFAULT_EXPERT_THRESHOLD: f64 = 1.0;
pub const DEFAULT_GRID_POINTS: usize = 20;

/// A region `start..end` and the allowed changepoint counts `min..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub start: usize,
    pub end: usize,
    pub min_count: usize,
    pub max_count: usize,
}

impl Annotation {
    pub fn allows(&self, count: usize) -> bool {
        (self.min_count..=self.max_count).contains(&count)
    }

    /// Changepoints `τ` with `start ≤ τ < end`.
    pub fn count_in(&self, changepoints: &[usize]) -> usize {
        changepoints.iter().filter(|&&c| c >= self.start && c < self.end).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub regions: Vec<Annotation>,
}

impl AnnotationSet {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Cuts the axis into regions of `region_len` steps (the last one may be
/// shorter), drops any region with a missing depth, and allows between the
/// count of depths above `high_thresh` and the count above `low_thresh`.
pub fn annotations_from_precip(
    precip: &PrecipSeries,
    region_len: usize,
    low_thresh: f64,
    high_thresh: f64,
) -> Result<AnnotationSet> {
    if region_len == 0 {
        return Err(Error::invalid("region_len must be at least 1"));
    }
    if !(low_thresh > 0.0 && high_thresh.is_finite() && low_thresh <= high_thresh) {
        return Err(Error::invalid(format!(
            "thresholds must satisfy 0 < low <= high, got low {low_thresh}, high {high_thresh}"
        )));
    }
    let depths = precip.depths();
    let regions = (0..depths.len())
        .step_by(region_len)
        .filter_map(|start| {
            let end = (start + region_len).min(depths.len());
            let region: Option<Vec<f64>> = depths[start..end].iter().copied().collect();
            let region = region?;
            let above = |th: f64| region.iter().filter(|&&d| d > th).count();
            Some(Annotation {
                start,
                end,
                min_count: above(high_thresh),
                max_count: above(low_thresh),
            })
        })
        .collect();
    Ok(AnnotationSet { regions })
}

/// Annotations that allow exactly the number of `changepoints` in each region.
pub fn annotations_from_changepoints(changepoints: &[usize], n: usize, region_len: usize) -> Result<AnnotationSet> {
    if region_len == 0 {
        return Err(Error::invalid("region_len must be at least 1"));
    }
    let regions = (0..n)
        .step_by(region_len)
        .map(|start| {
            let mut a = Annotation {
                start,
                end: (start + region_len).min(n),
                min_count: 0,
                max_count: 0,
            };
            a.min_count = a.count_in(changepoints);
            a.max_count = a.min_count;
            a
        })
        .collect();
    Ok(AnnotationSet { regions })
}

/// Number of regions whose changepoint count is not allowed.
pub fn annotation_loss(changepoints: &[usize], annotations: &AnnotationSet) -> usize {
    annotations
        .regions
        .iter()
        .filter(|a| !a.allows(a.count_in(changepoints)))
        .count()
}

/// Rainfall instants deeper than `threshold`, as soil-series indices. The
/// precipitation series must already be aligned to the soil grid. Instants
/// closer than `min_seg_len` to the previous kept one or to either end of
/// the series are dropped.
pub fn expert_changepoints(precip: &PrecipSeries, threshold: f64, min_seg_len: usize, n: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for (j, d) in precip.depths().iter().enumerate().take(n) {
        let Some(d) = *d else { continue };
        if !(d > threshold) || j < min_seg_len || j + min_seg_len > n {
            continue;
        }
        if out.last().map_or(true, |&p| j >= p + min_seg_len) {
            out.push(j);
        }
    }
    out
}

/// `points` penalties spaced evenly in log scale over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || points == 0 {
        return Err(Error::invalid(format!(
            "log grid needs 0 < lo <= hi and at least one point, got [{lo}, {hi}] x {points}"
        )));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

/// `points` penalties log-spaced over `[0.1·BIC, 10·BIC]` for a series of length `n`.
pub fn lambda_grid(n: usize, points: usize) -> Result<Vec<f64>> {
    let bic = bic_penalty(n);
    log_grid(0.1 * bic, 10.0 * bic, points)
}

/// Per-penalty results of a sweep, in increasing penalty order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySweepResult {
    pub lambdas: Vec<f64>,
    pub counts: Vec<usize>,
    pub changepoints: Vec<Vec<usize>>,
    pub total_costs: Vec<f64>,
    pub annotation_losses: Option<Vec<usize>>,
    pub excess_risks: Option<Vec<f64>>,
    /// Whether the counts are non-increasing along the grid.
    pub monotone: bool,
}

impl PenaltySweepResult {
    /// Penalties at which the annotation loss attains its minimum.
    pub fn annotation_argmin(&self) -> Vec<f64> {
        let Some(losses) = &self.annotation_losses else {
            return Vec::new();
        };
        let best = losses.iter().copied().min().unwrap_or(0);
        self.lambdas
            .iter()
            .zip(losses)
            .filter(|(_, &l)| l == best)
            .map(|(&lam, _)| lam)
            .collect()
    }

    /// Penalties at which the excess risk attains its minimum.
    pub fn excess_risk_argmin(&self) -> Vec<f64> {
        let Some(risks) = &self.excess_risks else {
            return Vec::new();
        };
        let best = risks.iter().copied().fold(f64::INFINITY, f64::min);
        self.lambdas
            .iter()
            .zip(risks)
            .filter(|(_, &r)| r == best)
            .map(|(&lam, _)| lam)
            .collect()
    }
}

/// Runs detection at every penalty in `lambdas` with one shared cost
/// cache, and evaluates whichever losses have inputs.
pub fn sweep(
    series: &SoilSeries,
    lambdas: &[f64],
    config: &PeltConfig,
    annotations: Option<&AnnotationSet>,
    expert: Option<&[usize]>,
) -> Result<PenaltySweepResult> {
    let cache = CostCache::new(config.cache_capacity);
    sweep_with(series, &Covariate::None, lambdas, config, annotations, expert, &cache)
}

pub fn sweep_with(
    series: &SoilSeries,
    covariate: &Covariate,
    lambdas: &[f64],
    config: &PeltConfig,
    annotations: Option<&AnnotationSet>,
    expert: Option<&[usize]>,
    cache: &CostCache,
) -> Result<PenaltySweepResult> {
    if lambdas.is_empty() {
        return Err(Error::invalid("penalty grid is empty"));
    }
    let mut lambdas = lambdas.to_vec();
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::invalid("penalties must be finite and >= 0"));
    }
    lambdas.sort_by(f64::total_cmp);
    let run = |&lambda: &f64| {
        let cfg = PeltConfig {
            penalty: Penalty::Fixed(lambda),
            ..config.clone()
        };
        detect_with(series, covariate, &cfg, cache)
    };
    let segs: Vec<Segmentation> = if config.parallel {
        lambdas.par_iter().map(run).collect::<Result<_>>()?
    } else {
        lambdas.iter().map(run).collect::<Result<_>>()?
    };
    let counts: Vec<usize> = segs.iter().map(Segmentation::len).collect();
    let monotone = counts.windows(2).all(|w| w[1] <= w[0]);
    let annotation_losses =
        annotations.map(|a| segs.iter().map(|s| annotation_loss(&s.changepoints, a)).collect());
    let excess_risks = match expert {
        Some(cps) => {
            let expert_fit = refit_with(series, covariate, cps, config, cache)?;
            let expert_cost: f64 = expert_fit.segments.iter().map(|s| s.cost).sum();
            Some(
                segs.iter()
                    .map(|s| expert_cost + s.penalty * cps.len() as f64 - s.total_cost)
                    .collect(),
            )
        }
        None => None,
    };
    Ok(PenaltySweepResult {
        lambdas,
        counts,
        changepoints: segs.iter().map(|s| s.changepoints.clone()).collect(),
        total_costs: segs.iter().map(|s| s.total_cost).collect(),
        annotation_losses,
        excess_risks,
        monotone,
    })
}

/// Excess penalized risk of `expert` changepoints at each penalty.
pub fn excess_risk(series: &SoilSeries, expert: &[usize], lambdas: &[f64], config: &PeltConfig) -> Result<Vec<f64>> {
    let result = sweep(series, lambdas, config, None, Some(expert))?;
    Ok(result.excess_risks.expect("expert changepoints supplied"))
}
