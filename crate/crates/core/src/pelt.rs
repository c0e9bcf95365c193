// SPDX-License-Identifier: MIT OR Apache-2.0

//! Penalized optimal partitioning with PELT pruning.
//!
//! `F(t)` is the optimal penalized cost of `values[..t]`, with `F(0) = −λ`
//! and `F(t) = min_τ F(τ) + C(τ, t) + λ` over admissible last changepoints
//! `τ ∈ {0} ∪ [l, t − l]`. A candidate `τ` with `F(τ) + C(τ, t) + K > F(t)`
//! can no longer be optimal for any end at or beyond `t + l`, so it is
//! marked at `t` and dropped from the candidate set once that window has
//! passed.
//!
//! Segments whose fit does not converge carry [`SENTINEL`]. When every live
//! candidate has such a segment, the iteration falls back to the smallest
//! `F(τ) + λ`, adds [`SENTINEL`] to it, flags `F(t)` as having no finite
//! segmentation and prunes nothing.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decay_model::{predict, Covariate, DecayParams};
use crate::error::{Error, Result};
use crate::nls::{fit_single_start, FitConfig};
use crate::segment_cost::{
    check_range, entry_from_fit, segment_cost_with, CostCache, CostEntry, DEFAULT_CACHE_CAPACITY, MIN_FIT_LEN,
    SENTINEL,
};
use crate::timeseries::SoilSeries;

/// One fitted segment of a [`Segmentation`].
pub type SegmentFit = CostEntry;

/// Candidate sets at or above this size are costed on the rayon pool.
const PARALLEL_THRESHOLD: usize = 8;

/// Penalty per changepoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PenaltyRepr", into = "PenaltyRepr")]
pub enum Penalty {
    /// `3·ln n`: three parameters per segment.
    Bic,
    Fixed(f64),
}

impl Penalty {
    pub fn value(&self, n: usize) -> f64 {
        match *self {
            Penalty::Bic => bic_penalty(n),
            Penalty::Fixed(v) => v,
        }
    }
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty::Bic
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Penalty::Bic => f.write_str("bic"),
            Penalty::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl std::str::FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("bic") {
            return Ok(Penalty::Bic);
        }
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("penalty must be 'bic' or a number, got '{s}'")))?;
        Penalty::try_from(PenaltyRepr::Value(v))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PenaltyRepr {
    Value(f64),
    Name(String),
}

impl TryFrom<PenaltyRepr> for Penalty {
    type Error = Error;

    fn try_from(r: PenaltyRepr) -> Result<Self> {
        match r {
            PenaltyRepr::Value(v) if v.is_finite() && v >= 0.0 => Ok(Penalty::Fixed(v)),
            PenaltyRepr::Value(v) => Err(Error::invalid(format!("penalty must be finite and >= 0, got {v}"))),
            PenaltyRepr::Name(s) => s.parse(),
        }
    }
}

impl From<Penalty> for PenaltyRepr {
    fn from(p: Penalty) -> Self {
        match p {
            Penalty::Bic => PenaltyRepr::Name("bic".into()),
            Penalty::Fixed(v) => PenaltyRepr::Value(v),
        }
    }
}

/// `3·ln n`.
pub fn bic_penalty(n: usize) -> f64 {
    3.0 * (n.max(1) as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeltConfig {
    pub penalty: Penalty,
    /// Minimum segment length `l`; also the minimum spacing of changepoints.
    pub min_seg_len: usize,
    /// Constant `K` of the pruning inequality.
    pub pruning_constant: f64,
    /// Extra slack added to the pruning threshold; 0 prunes exactly as PELT.
    pub safe_margin: f64,
    /// With pruning off every admissible candidate stays live.
    pub pruning: bool,
    pub fit: FitConfig,
    /// Lower bound on the jump amplitude α1 of every fit.
    pub min_jump: f64,
    /// Start each fit of `(τ, t)` from the converged fit of `(τ, t − 1)`.
    pub warm_start: bool,
    /// Entries kept by the cost cache; 0 disables it.
    pub cache_capacity: usize,
    /// Cost candidate sets on the rayon pool.
    pub parallel: bool,
}

impl Default for PeltConfig {
    fn default() -> Self {
        Self {
            penalty: Penalty::Bic,
            min_seg_len: 24,
            pruning_constant: 0.0,
            safe_margin: 0.0,
            pruning: true,
            fit: FitConfig::default(),
            min_jump: 0.001,
            warm_start: false,
            cache_capacity: DEFAULT_CACHE_CAPACITY,
            parallel: true,
        }
    }
}

impl PeltConfig {
    pub fn with_penalty(mut self, penalty: f64) -> Self {
        self.penalty = Penalty::Fixed(penalty);
        self
    }

    pub fn with_min_seg_len(mut self, l: usize) -> Self {
        self.min_seg_len = l;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Penalty::Fixed(v) = self.penalty {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("penalty must be finite and >= 0, got {v}")));
            }
        }
        if self.min_seg_len < MIN_FIT_LEN {
            return Err(Error::invalid(format!(
                "min_seg_len must be at least {MIN_FIT_LEN}, got {}",
                self.min_seg_len
            )));
        }
        if !(self.pruning_constant.is_finite() && self.pruning_constant >= 0.0) {
            return Err(Error::invalid("pruning_constant must be finite and >= 0"));
        }
        if !(self.safe_margin >= 0.0) {
            return Err(Error::invalid("safe_margin must be >= 0"));
        }
        if !(self.min_jump.is_finite() && self.min_jump < self.fit.alpha1.upper) {
            return Err(Error::invalid(format!(
                "min_jump must be finite and below the alpha1 upper bound {}",
                self.fit.alpha1.upper
            )));
        }
        self.effective_fit().validate()
    }

    /// The fit configuration with `min_jump` applied as the α1 lower bound.
    pub fn effective_fit(&self) -> FitConfig {
        self.fit.clone().with_min_jump(self.min_jump)
    }
}

/// A reported violation of `α0ᵢ + α1ᵢ > α0ᵢ₊₁` between consecutive segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpWarning {
    /// Index of the earlier segment.
    pub segment: usize,
    /// Changepoint between segment `segment` and `segment + 1`.
    pub changepoint: usize,
    pub peak: f64,
    pub next_asymptote: f64,
}

impl fmt::Display for JumpWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "segment {} peak alpha0+alpha1 = {:.6} does not exceed the next asymptote {:.6} (changepoint {})",
            self.segment, self.peak, self.next_asymptote, self.changepoint
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Strictly increasing changepoints in `(0, n)`; each starts a segment.
    pub changepoints: Vec<usize>,
    /// `k + 1` segments covering `0..n`.
    pub segments: Vec<SegmentFit>,
    pub penalty: f64,
    /// Sum of segment costs plus `penalty · k`.
    pub total_cost: f64,
    /// `F(0..=n)`. Where no finite-cost segmentation of the prefix exists the
    /// entry is the best fallback value plus [`SENTINEL`], or infinite if
    /// there is none.
    pub f_trace: Option<Vec<f64>>,
    pub n: usize,
}

impl Segmentation {
    fn from_segments(segments: Vec<SegmentFit>, penalty: f64, n: usize, f_trace: Option<Vec<f64>>) -> Self {
        let changepoints = segments.iter().skip(1).map(|s| s.start).collect::<Vec<_>>();
        let total_cost = segments.iter().map(|s| s.cost).sum::<f64>() + penalty * changepoints.len() as f64;
        Self {
            changepoints,
            segments,
            penalty,
            total_cost,
            f_trace,
            n,
        }
    }

    pub fn len(&self) -> usize {
        self.changepoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changepoints.is_empty()
    }

    /// Segment costs plus `penalty · k`, recomputed from the segments.
    pub fn recompute_total(&self) -> f64 {
        self.segments.iter().map(|s| s.cost).sum::<f64>() + self.penalty * self.changepoints.len() as f64
    }

    pub fn all_converged(&self) -> bool {
        self.segments.iter().all(CostEntry::is_finite)
    }

    /// Model values at every index, without covariate effects. Unfitted
    /// segments yield `NaN`.
    pub fn fitted_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n);
        for s in &self.segments {
            let p = s.fit.params;
            out.extend((1..=s.len()).map(|u| p.value_at(u as f64)));
        }
        out
    }

    /// Model values including covariate effects.
    pub fn fitted_values_with(&self, covariate: &Covariate) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n);
        for s in &self.segments {
            let design = covariate.segment_design(s.start, s.end)?;
            let offsets: Vec<usize> = (1..=s.len()).collect();
            if s.fit.beta.len() == design.dim() {
                out.extend(predict(&s.fit.params, &offsets, &design, &s.fit.beta)?);
            } else {
                out.extend(offsets.iter().map(|&u| s.fit.params.value_at(u as f64)));
            }
        }
        Ok(out)
    }

    /// γ of the segment covering each index.
    pub fn gamma_track(&self) -> Vec<f64> {
        self.parameter_track(|p| p.gamma)
    }

    /// Any per-segment quantity expanded to one value per index.
    pub fn parameter_track(&self, f: impl Fn(&DecayParams) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n);
        for s in &self.segments {
            out.extend(std::iter::repeat(f(&s.fit.params)).take(s.len()));
        }
        out
    }

    /// Consecutive segments where the earlier peak `α0 + α1` does not exceed
    /// the later asymptote.
    pub fn jump_warnings(&self) -> Vec<JumpWarning> {
        self.segments
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| {
                let (a, b) = (&w[0].fit.params, &w[1].fit.params);
                let peak = a.alpha0 + a.alpha1;
                (w[0].is_finite() && w[1].is_finite() && !(peak > b.alpha0)).then(|| JumpWarning {
                    segment: i,
                    changepoint: w[1].start,
                    peak,
                    next_asymptote: b.alpha0,
                })
            })
            .collect()
    }

    /// Segments shorter than `min_seg_len`, as `(start, end)`.
    pub fn spacing_violations(&self, min_seg_len: usize) -> Vec<(usize, usize)> {
        self.segments
            .iter()
            .filter(|s| s.len() < min_seg_len)
            .map(|s| (s.start, s.end))
            .collect()
    }
}

/// Runs PELT with a fresh cost cache.
pub fn detect(series: &SoilSeries, config: &PeltConfig) -> Result<Segmentation> {
    detect_with(series, &Covariate::None, config, &CostCache::new(config.cache_capacity))
}

/// Runs PELT with a covariate and a caller-owned cache. The cache must only
/// ever have served this series, covariate and fit configuration.
pub fn detect_with(
    series: &SoilSeries,
    covariate: &Covariate,
    config: &PeltConfig,
    cache: &CostCache,
) -> Result<Segmentation> {
    let engine = Engine::new(series, covariate, config, cache)?;
    engine.run(Mode::Pruned, None)
}

/// Optimal partitioning over every admissible candidate, with no pruning.
pub fn detect_exhaustive(series: &SoilSeries, config: &PeltConfig) -> Result<Segmentation> {
    detect_exhaustive_with(series, &Covariate::None, config, &CostCache::new(config.cache_capacity))
}

pub fn detect_exhaustive_with(
    series: &SoilSeries,
    covariate: &Covariate,
    config: &PeltConfig,
    cache: &CostCache,
) -> Result<Segmentation> {
    let engine = Engine::new(series, covariate, config, cache)?;
    engine.run(Mode::Exhaustive, None)
}

/// Fits the segments implied by `changepoints` and totals their penalized
/// cost. Spacing below `min_seg_len` is allowed; see
/// [`Segmentation::spacing_violations`].
pub fn refit(series: &SoilSeries, changepoints: &[usize], config: &PeltConfig) -> Result<Segmentation> {
    refit_with(series, &Covariate::None, changepoints, config, &CostCache::new(config.cache_capacity))
}

pub fn refit_with(
    series: &SoilSeries,
    covariate: &Covariate,
    changepoints: &[usize],
    config: &PeltConfig,
    cache: &CostCache,
) -> Result<Segmentation> {
    config.validate()?;
    series.ensure_complete()?;
    let n = series.len();
    let mut prev = 0;
    for &c in changepoints {
        if c == 0 || c >= n {
            return Err(Error::InvalidRange { start: c, end: c, len: n });
        }
        if c <= prev && prev != 0 {
            return Err(Error::invalid(format!("changepoints must be strictly increasing, got {c} after {prev}")));
        }
        prev = c;
    }
    let engine = Engine::new_unchecked(series, covariate, config, cache);
    let bounds = segment_bounds(changepoints, n);
    let segments = bounds
        .iter()
        .map(|&(a, b)| engine.cost(a, b).map(|e| (*e).clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Segmentation::from_segments(segments, engine.penalty, n, None))
}

/// `(start, end)` pairs of the segments implied by `changepoints`.
pub fn segment_bounds(changepoints: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(changepoints.len() + 2);
    edges.push(0);
    edges.extend_from_slice(changepoints);
    edges.push(n);
    edges.windows(2).map(|w| (w[0], w[1])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Pruned,
    Exhaustive,
}

/// A live candidate and the time at which the pruning inequality first held.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Candidate {
    pub tau: usize,
    pub marked_at: Option<usize>,
}

struct Engine<'a> {
    values: &'a [f64],
    covariate: &'a Covariate,
    fit: FitConfig,
    cache: &'a CostCache,
    penalty: f64,
    l: usize,
    k: f64,
    margin: f64,
    pruning: bool,
    warm_start: bool,
    parallel: bool,
}

impl<'a> Engine<'a> {
    fn new(series: &'a SoilSeries, covariate: &'a Covariate, config: &PeltConfig, cache: &'a CostCache) -> Result<Self> {
        config.validate()?;
        series.ensure_complete()?;
        if series.len() < 2 * config.min_seg_len {
            return Err(Error::SeriesTooShort {
                len: series.len(),
                min_seg_len: config.min_seg_len,
            });
        }
        Ok(Self::new_unchecked(series, covariate, config, cache))
    }

    fn new_unchecked(
        series: &'a SoilSeries,
        covariate: &'a Covariate,
        config: &PeltConfig,
        cache: &'a CostCache,
    ) -> Self {
        Self {
            values: series.values(),
            covariate,
            fit: config.effective_fit(),
            cache,
            penalty: config.penalty.value(series.len()),
            l: config.min_seg_len,
            k: config.pruning_constant,
            margin: config.safe_margin,
            pruning: config.pruning,
            warm_start: config.warm_start,
            parallel: config.parallel,
        }
    }

    fn cost(&self, start: usize, end: usize) -> Result<Arc<CostEntry>> {
        check_range(self.values.len(), start, end)?;
        self.cache.get_or_compute(start, end, || {
            if self.warm_start {
                if let Some(prev) = self.cache.get(start, end - 1).filter(|e| e.is_finite()) {
                    let design = self.covariate.segment_design(start, end)?;
                    if design.dim() == prev.fit.beta.len() {
                        let fit = fit_single_start(&self.values[start..end], &self.fit, &design, &prev.fit.params)?;
                        if fit.converged {
                            return Ok(entry_from_fit(start, end, fit));
                        }
                    }
                }
            }
            segment_cost_with(self.values, self.covariate, start, end, &self.fit)
        })
    }

    fn costs(&self, taus: &[usize], end: usize) -> Result<Vec<Arc<CostEntry>>> {
        if self.parallel && taus.len() >= PARALLEL_THRESHOLD {
            taus.par_iter().map(|&tau| self.cost(tau, end)).collect()
        } else {
            taus.iter().map(|&tau| self.cost(tau, end)).collect()
        }
    }

    /// Runs the recursion; `sets` receives the candidate set at each `t ≥ 2l`.
    fn run(&self, mode: Mode, mut sets: Option<&mut Vec<Vec<usize>>>) -> Result<Segmentation> {
        let n = self.values.len();
        let l = self.l;
        let lambda = self.penalty;
        let mut f = vec![f64::INFINITY; n + 1];
        let mut finite = vec![false; n + 1];
        let mut last = vec![0usize; n + 1];
        f[0] = -lambda;
        finite[0] = true;

        let init: Vec<usize> = (1..2 * l).collect();
        let entries = self.costs_to_ends(&init)?;
        for (t, e) in init.iter().zip(&entries) {
            // Only τ = 0 is admissible before 2l, so F(t) = F(0) + C(0, t) + λ.
            f[*t] = e.cost;
            finite[*t] = e.is_finite();
        }

        let mut live = vec![
            Candidate {
                tau: 0,
                marked_at: None,
            },
            Candidate {
                tau: l,
                marked_at: None,
            },
        ];
        let mut taus = Vec::new();
        for t in 2 * l..=n {
            if mode == Mode::Exhaustive {
                live = std::iter::once(0)
                    .chain(l..=t - l)
                    .map(|tau| Candidate { tau, marked_at: None })
                    .collect();
            }
            live.retain(|c| finite[c.tau]);
            taus.clear();
            taus.extend(live.iter().map(|c| c.tau));
            if let Some(sets) = sets.as_deref_mut() {
                sets.push(taus.clone());
            }
            let entries = self.costs(&taus, t)?;

            let mut best: Option<(f64, usize)> = None;
            let mut fallback: Option<(f64, usize)> = None;
            for (c, e) in live.iter().zip(&entries) {
                if e.is_finite() {
                    let v = f[c.tau] + e.cost + lambda;
                    if best.map_or(true, |(b, _)| v < b) {
                        best = Some((v, c.tau));
                    }
                } else {
                    let v = f[c.tau] + lambda;
                    if fallback.map_or(true, |(b, _)| v < b) {
                        fallback = Some((v, c.tau));
                    }
                }
            }
            match (best, fallback) {
                (Some((v, tau)), _) => {
                    f[t] = v;
                    finite[t] = true;
                    last[t] = tau;
                }
                (None, Some((v, tau))) => {
                    f[t] = v + SENTINEL;
                    finite[t] = false;
                    last[t] = tau;
                }
                (None, None) => {
                    f[t] = f64::INFINITY;
                    finite[t] = false;
                }
            }

            if mode == Mode::Pruned {
                if self.pruning && finite[t] {
                    let threshold = f[t] + self.margin;
                    for (c, e) in live.iter_mut().zip(&entries) {
                        if c.marked_at.is_none() && e.is_finite() && f[c.tau] + e.cost + self.k > threshold {
                            c.marked_at = Some(t);
                        }
                    }
                }
                live.retain(|c| c.marked_at.map_or(true, |s| s + l > t + 1));
                live.push(Candidate {
                    tau: t + 1 - l,
                    marked_at: None,
                });
            }
        }

        if !finite[n] {
            return Err(Error::NoValidSegmentation);
        }
        let mut changepoints = Vec::new();
        let mut t = n;
        while t > 0 {
            let tau = last[t];
            if tau > 0 {
                changepoints.push(tau);
            }
            t = tau;
        }
        changepoints.reverse();

        let segments = segment_bounds(&changepoints, n)
            .into_iter()
            .map(|(a, b)| self.cost(a, b).map(|e| (*e).clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Segmentation::from_segments(segments, lambda, n, Some(f)))
    }

    /// Costs of the prefixes `0..t` for each `t` in `ends`.
    fn costs_to_ends(&self, ends: &[usize]) -> Result<Vec<Arc<CostEntry>>> {
        if self.parallel && ends.len() >= PARALLEL_THRESHOLD && !self.warm_start {
            ends.par_iter().map(|&t| self.cost(0, t)).collect()
        } else {
            ends.iter().map(|&t| self.cost(0, t)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::*;

    /// Piecewise decay with jumps at `cps`, plus Gaussian noise.
    fn planted(n: usize, cps: &[usize], sd: f64, seed: u64) -> SoilSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd.max(f64::MIN_POSITIVE)).unwrap();
        let mut values = Vec::with_capacity(n);
        for (i, (a, b)) in segment_bounds(cps, n).into_iter().enumerate() {
            let p = DecayParams::new(0.06 + 0.005 * (i % 3) as f64, 0.11, -3.0 - 0.5 * (i % 2) as f64);
            values.extend((1..=b - a).map(|u| p.value_at(u as f64)));
        }
        for v in &mut values {
            if sd > 0.0 {
                *v += noise.sample(&mut rng);
            }
        }
        SoilSeries::from_values(values).unwrap()
    }

    fn config(l: usize, penalty: f64) -> PeltConfig {
        PeltConfig {
            min_seg_len: l,
            penalty: Penalty::Fixed(penalty),
            ..PeltConfig::default()
        }
    }

    #[test]
    fn penalty_parsing() {
        assert_eq!("bic".parse::<Penalty>().unwrap(), Penalty::Bic);
        assert_eq!("250".parse::<Penalty>().unwrap(), Penalty::Fixed(250.0));
        assert!("-1".parse::<Penalty>().is_err());
        assert!("nope".parse::<Penalty>().is_err());
        assert_relative_eq!(Penalty::Bic.value(1000), 3.0 * 1000f64.ln());
    }

    #[test]
    fn too_short_series_errors() {
        let s = planted(40, &[], 0.0005, 1);
        assert!(matches!(
            detect(&s, &config(24, 10.0)),
            Err(Error::SeriesTooShort { len: 40, min_seg_len: 24 })
        ));
    }

    #[test]
    fn single_planted_jump_is_found() {
        let s = planted(200, &[100], 0.0005, 3);
        let cfg = config(10, bic_penalty(200));
        let ex = detect_exhaustive(&s, &cfg).unwrap();
        assert_eq!(ex.changepoints, vec![100]);
        let pe = detect(&s, &cfg).unwrap();
        assert_eq!(pe.changepoints, ex.changepoints);
        assert_relative_eq!(pe.total_cost, ex.total_cost, max_relative = 1e-12);
    }

    #[test]
    fn huge_penalty_gives_no_changepoints() {
        let s = planted(120, &[40, 80], 0.0005, 5);
        let seg = detect_exhaustive(&s, &config(10, 1e9)).unwrap();
        assert!(seg.is_empty());
        assert_eq!(seg.segments.len(), 1);
    }

    #[test]
    fn zero_penalty_on_clean_data_hits_the_spacing_limit() {
        let cps: Vec<usize> = (1..10).map(|i| i * 3).collect();
        let s = planted(30, &cps, 0.0, 0);
        let seg = detect_exhaustive(&s, &config(3, 0.0)).unwrap();
        assert_eq!(seg.changepoints.len(), 30 / 3 - 1);
    }

    #[test]
    fn total_cost_matches_trace_and_refit() {
        let s = planted(240, &[80, 160], 0.0005, 9);
        let cfg = config(10, bic_penalty(240));
        let seg = detect(&s, &cfg).unwrap();
        let f = seg.f_trace.as_ref().unwrap();
        assert_relative_eq!(f[240], seg.total_cost, max_relative = 1e-12);
        assert_relative_eq!(seg.recompute_total(), seg.total_cost, max_relative = 1e-12);
        let again = refit(&s, &seg.changepoints, &cfg).unwrap();
        assert_relative_eq!(again.total_cost, seg.total_cost, max_relative = 1e-12);
        let wrong = refit(&s, &[60, 130], &cfg).unwrap();
        assert!(wrong.total_cost >= seg.total_cost);
        let none = refit(&s, &[], &cfg).unwrap();
        assert_eq!(none.segments.len(), 1);
    }

    #[test]
    fn refit_validates_indices() {
        let s = planted(100, &[], 0.0005, 2);
        let cfg = config(10, 10.0);
        assert!(refit(&s, &[0], &cfg).is_err());
        assert!(refit(&s, &[100], &cfg).is_err());
        assert!(refit(&s, &[50, 40], &cfg).is_err());
        let close = refit(&s, &[50, 52], &cfg).unwrap();
        assert_eq!(close.spacing_violations(10), vec![(50, 52)]);
        assert_eq!(close.segments[1].cost, SENTINEL);
    }

    #[test]
    fn unfittable_series_reports_no_segmentation() {
        let s = SoilSeries::from_values(vec![0.2; 60]).unwrap();
        assert!(matches!(detect(&s, &config(10, 5.0)), Err(Error::NoValidSegmentation)));
    }

    #[test]
    fn pruning_on_and_off_agree() {
        for seed in 0..3 {
            let s = planted(200, &[50, 120], 0.001, seed);
            let cfg = config(10, bic_penalty(200));
            let off = PeltConfig {
                pruning: false,
                ..cfg.clone()
            };
            let a = detect(&s, &cfg).unwrap();
            let b = detect(&s, &off).unwrap();
            assert_eq!(a.changepoints, b.changepoints);
            assert_relative_eq!(a.total_cost, b.total_cost, max_relative = 1e-12);
        }
    }

    #[test]
    fn warm_start_keeps_planted_changepoints() {
        let s = planted(240, &[80, 160], 0.0005, 4);
        let cfg = PeltConfig {
            warm_start: true,
            ..config(10, bic_penalty(240))
        };
        assert_eq!(detect(&s, &cfg).unwrap().changepoints, vec![80, 160]);
    }

    /// Checks the engine's candidate sets against a direct evaluation of the
    /// rule: `τ` is live at `t` iff it is admissible, has finite `F`, and no
    /// `s ≤ t − l` exists at which the pruning inequality held.
    #[test]
    fn candidate_sets_match_naive_window() {
        for (l, penalty, seed) in [(5, 4.0, 11), (5, 30.0, 12), (8, 10.0, 13)] {
            let n = 100;
            let s = planted(n, &[30, 62], 0.001, seed);
            let cfg = config(l, penalty);
            let cache = CostCache::default();
            let engine = Engine::new(&s, &Covariate::None, &cfg, &cache).unwrap();
            let mut sets = Vec::new();
            let seg = engine.run(Mode::Pruned, Some(&mut sets)).unwrap();
            let f = seg.f_trace.unwrap();
            let fin = |u: usize| f[u] < SENTINEL / 2.0;
            let prunes_at = |tau: usize, u: usize| {
                let e = engine.cost(tau, u).unwrap();
                fin(u) && e.is_finite() && f[tau] + e.cost > f[u]
            };
            let mut pruned_any = false;
            for (t, got) in (2 * l..=n).zip(&sets) {
                let naive: Vec<usize> = std::iter::once(0)
                    .chain(l..=t - l)
                    .filter(|&tau| fin(tau))
                    .filter(|&tau| {
                        let first = if tau == 0 { 2 * l } else { tau + l };
                        !(first..=t.saturating_sub(l)).any(|u| prunes_at(tau, u))
                    })
                    .collect();
                let mut got = got.clone();
                got.sort_unstable();
                pruned_any |= naive.len() < t + 1 - 2 * l + 1;
                assert_eq!(got, naive, "candidate set at t = {t}, l = {l}");
            }
            assert!(pruned_any);
        }
    }
}
